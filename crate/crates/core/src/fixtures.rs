//! Built-in fixtures: a worked person example, a museum case, a
//! seeded generator of consistent multihop worlds with edits, and
//! large-scale synthetic inputs for ingest and loader checks.
//!
//! Every generated world is its own oracle: the generator knows each hop's
//! gold answer after the edits and the answers the edits superseded.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{write_dataset, HopGold, MultihopInstance};
use crate::gateway::{MockConfig, MockScript, IMAGE_TOKEN};
use crate::graph::{EditQuadruple, EditReceipt, EntityRecord, GraphConfig, GraphError, ImageRef, KnowledgeGraph, TripleRecord};

/// Relation labels of generated worlds. Their word sets are pairwise
/// disjoint so a question names exactly one of them.
pub const RELATIONS: &[&str] = &[
    "capital",
    "birthplace country",
    "spouse",
    "employer",
    "founder",
    "headquarters location",
    "mother tongue",
    "award received",
    "alma mater",
    "record label",
];

/// Relations whose tails are literals, used for distractor facts.
const LITERAL_RELATIONS: &[&str] = &["inception", "population"];

pub const NAME_RELATION: &str = "name";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fixture {
    pub entities: Vec<EntityRecord>,
    pub triples: Vec<TripleRecord>,
    pub instances: Vec<MultihopInstance>,
    /// Instance id -> answers the edits made obsolete along its chain.
    pub superseded: BTreeMap<String, Vec<String>>,
}

/// Paths written by [`Fixture::write_dir`].
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub entities: PathBuf,
    pub triples: PathBuf,
    pub edits: PathBuf,
    pub dataset: PathBuf,
}

impl Fixture {
    pub fn base_graph(&self, config: GraphConfig) -> Result<KnowledgeGraph, GraphError> {
        let mut ents = Vec::new();
        let mut triples = Vec::new();
        for e in &self.entities {
            serde_json::to_writer(&mut ents, e).expect("serializable");
            ents.push(b'\n');
        }
        for t in &self.triples {
            serde_json::to_writer(&mut triples, t).expect("serializable");
            triples.push(b'\n');
        }
        KnowledgeGraph::load(ents.as_slice(), triples.as_slice(), config)
    }

    /// All instance edits in instance order, duplicates removed.
    pub fn edits(&self) -> Vec<EditQuadruple> {
        let mut seen = HashSet::new();
        self.instances
            .iter()
            .flat_map(|i| i.edits.iter())
            .filter(|e| seen.insert((*e).clone()))
            .cloned()
            .collect()
    }

    pub fn edited_graph(&self, config: GraphConfig) -> Result<(KnowledgeGraph, Vec<EditReceipt>), GraphError> {
        let mut g = self.base_graph(config)?;
        let receipts = g.apply_edits(&self.edits())?;
        Ok((g, receipts))
    }

    pub fn merge(mut self, other: Fixture) -> Fixture {
        self.entities.extend(other.entities);
        self.triples.extend(other.triples);
        self.instances.extend(other.instances);
        self.superseded.extend(other.superseded);
        self
    }

    pub fn write_dir(&self, dir: &Path) -> std::io::Result<FixturePaths> {
        let paths = FixturePaths {
            entities: dir.join("entities.jsonl"),
            triples: dir.join("triples.jsonl"),
            edits: dir.join("edits.jsonl"),
            dataset: dir.join("dataset.jsonl"),
        };
        write_jsonl(&paths.entities, &self.entities)?;
        write_jsonl(&paths.triples, &self.triples)?;
        write_jsonl(&paths.edits, &self.edits())?;
        write_dataset(&self.instances, BufWriter::new(std::fs::File::create(&paths.dataset)?))?;
        Ok(paths)
    }
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Rephrased image -> original image for every instance that has one.
pub fn rephrased_aliases(instances: &[MultihopInstance]) -> Vec<(ImageRef, ImageRef)> {
    instances
        .iter()
        .filter_map(|i| i.image_rephrased.clone().map(|r| (r, i.image.clone())))
        .collect()
}

/// Mock backend configuration that answers `instances` correctly over
/// `graph`: it knows the graph's relation labels and which images are
/// rephrasings of which.
pub fn oracle_mock(graph: &KnowledgeGraph, instances: &[MultihopInstance], seed: u64) -> MockConfig {
    MockConfig::new(seed)
        .with_relations(graph.relation_labels())
        .with_image_aliases(rephrased_aliases(instances))
}

/// `What is the r_n of the ... of the r_2 of the entity shown in the image?`
pub fn chain_question(relations: &[&str]) -> String {
    let mut q = String::from("What is the ");
    for r in relations.iter().rev() {
        q.push_str(r);
        q.push_str(" of the ");
    }
    q.push_str("entity shown in the image?");
    q
}

fn entity(id: &str, name: &str, aliases: &[&str], image: Option<&str>) -> EntityRecord {
    EntityRecord {
        id: id.into(),
        name: name.into(),
        aliases: aliases.iter().map(|s| s.to_string()).collect(),
        image: image.map(str::to_string),
    }
}

fn triple(head: &str, relation: &str, tail: &str) -> TripleRecord {
    TripleRecord {
        head: head.into(),
        relation: relation.into(),
        tail: tail.into(),
        provenance: None,
        active: None,
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub const PERSON_ID: &str = "person";
pub const PERSON_QUESTION: &str = "What is the capital of the birthplace country of the entity shown in the image?";

/// The introduction's example. The image first shows Roy Bittan (born in the
/// USA, capital Washington, D.C.); the edit says it shows Gustavo
/// Santaolalla, so the answer moves to Buenos Aires.
pub fn person_example() -> Fixture {
    let entities = vec![
        entity("Q1", "Roy Bittan", &["Roy"], Some("person/person.jpg")),
        entity("Q2", "Gustavo Santaolalla", &["Gustavo Alfredo Santaolalla"], None),
        entity("Q30", "United States of America", &["USA", "United States", "U.S."], None),
        entity("Q414", "Argentina", &["Argentine Republic", "República Argentina"], None),
        entity("Q61", "Washington, D.C.", &["Washington", "District of Columbia"], None),
        entity("Q1486", "Buenos Aires", &["Buenos Ayres", "Ciudad Autónoma de Buenos Aires", "CABA"], None),
    ];
    let triples = vec![
        triple("Q1", NAME_RELATION, "Q1"),
        triple("Q1", "birthplace country", "Q30"),
        triple("Q1", "birth year", "1949"),
        triple("Q2", "birthplace country", "Q414"),
        triple("Q2", "birth year", "1951"),
        triple("Q30", "capital", "Q61"),
        triple("Q414", "capital", "Q1486"),
    ];
    let edit = EditQuadruple {
        subject: "Roy Bittan".into(),
        image: Some(ImageRef::new("person/person.jpg")),
        relation: NAME_RELATION.into(),
        old: "Roy Bittan".into(),
        new: "Gustavo Santaolalla".into(),
    };
    let instance = MultihopInstance {
        id: PERSON_ID.into(),
        question: PERSON_QUESTION.into(),
        paraphrases: strings(&[
            "Which city is the capital of the country where the person in the picture was born?",
            "The person pictured was born in a country; what is its capital?",
        ]),
        image: ImageRef::new("person/person.jpg"),
        image_rephrased: Some(ImageRef::new("person/person_rephrased.jpg")),
        edits: vec![edit],
        hops: vec![
            HopGold {
                subject: IMAGE_TOKEN.into(),
                relation: NAME_RELATION.into(),
                answers: strings(&["Gustavo Santaolalla", "Gustavo Alfredo Santaolalla"]),
            },
            HopGold {
                subject: "Gustavo Santaolalla".into(),
                relation: "birthplace country".into(),
                answers: strings(&["Argentina", "Argentine Republic", "República Argentina"]),
            },
            HopGold {
                subject: "Argentina".into(),
                relation: "capital".into(),
                answers: strings(&["Buenos Aires", "Buenos Ayres", "Ciudad Autónoma de Buenos Aires", "CABA"]),
            },
        ],
        final_answers: Some(strings(&["Buenos Aires", "Buenos Ayres", "Ciudad Autónoma de Buenos Aires", "CABA"])),
    };
    Fixture {
        entities,
        triples,
        instances: vec![instance],
        superseded: BTreeMap::from([(
            PERSON_ID.to_string(),
            strings(&["Roy Bittan", "United States of America", "Washington, D.C."]),
        )]),
    }
}

pub const MUSEUM_ID: &str = "museum";
pub const MUSEUM_QUESTION: &str = "Which country is home to the city where the museum in the picture is located?";

/// Museum case where the two paths disagree.
///
/// The link path maps "located in" onto `country` and answers Belgium while
/// the reader answers Brussels; the chooser keeps Brussels. On the last hop
/// the keyword "home" matches no relation, so only the reader answers.
/// The returned script pins the word vectors and model replies that make
/// this happen.
pub fn museum_example() -> (Fixture, MockScript) {
    let entities = vec![
        entity("Q1", "Hergé Museum", &["Musée Hergé"], Some("museum/museum.jpg")),
        entity("Q31", "Belgium", &["Kingdom of Belgium", "België"], None),
        entity("Q239", "Brussels", &["City of Brussels", "Bruxelles"], None),
        entity("Q207", "Louvain-la-Neuve", &["LLN"], None),
    ];
    let triples = vec![
        triple("Q1", "country", "Q31"),
        triple("Q1", "location", "Q207"),
        triple("Q239", "country", "Q31"),
        triple("Q207", "country", "Q31"),
        triple("Q31", "capital", "Q239"),
    ];
    let edit = EditQuadruple {
        subject: "Hergé Museum".into(),
        image: Some(ImageRef::new("museum/museum.jpg")),
        relation: "location".into(),
        old: "Louvain-la-Neuve".into(),
        new: "Brussels".into(),
    };
    let hop2 = "Where is Hergé Museum located?";
    let hop3 = "Which country is home to Brussels?";
    let instance = MultihopInstance {
        id: MUSEUM_ID.into(),
        question: MUSEUM_QUESTION.into(),
        paraphrases: Vec::new(),
        image: ImageRef::new("museum/museum.jpg"),
        image_rephrased: None,
        edits: vec![edit],
        hops: vec![
            HopGold {
                subject: IMAGE_TOKEN.into(),
                relation: NAME_RELATION.into(),
                answers: strings(&["Hergé Museum", "Musée Hergé"]),
            },
            HopGold {
                subject: "Hergé Museum".into(),
                relation: "location".into(),
                answers: strings(&["Brussels", "City of Brussels", "Bruxelles"]),
            },
            HopGold {
                subject: "Brussels".into(),
                relation: "country".into(),
                answers: strings(&["Belgium", "Kingdom of Belgium", "België"]),
            },
        ],
        final_answers: Some(strings(&["Belgium", "Kingdom of Belgium", "België"])),
    };
    let vectors = [
        ("located in", [1.0, 0.0, 0.0, 0.0]),
        ("country", [0.8, 0.6, 0.0, 0.0]),
        ("location", [0.3, 0.0, 0.954, 0.0]),
        ("capital", [0.0, 1.0, 0.0, 0.0]),
        ("home", [0.0, 0.0, 0.0, 1.0]),
    ];
    let script = MockScript {
        decompose: BTreeMap::from([(
            MUSEUM_QUESTION.to_string(),
            strings(&[
                "1: Which museum is shown in [IMAGE]?",
                "2: Where is [ENT] located?",
                "3: Which country is home to [ENT]?",
            ]),
        )]),
        extract: BTreeMap::from([(hop2.to_string(), "located in".to_string()), (hop3.to_string(), "home".to_string())]),
        answer: BTreeMap::from([
            (hop2.to_string(), "Brussels".to_string()),
            (hop3.to_string(), "Kingdom of Belgium".to_string()),
        ]),
        choose: BTreeMap::from([(hop2.to_string(), "Brussels".to_string())]),
        word_embed: vectors.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect(),
    };
    let fixture = Fixture {
        entities,
        triples,
        instances: vec![instance],
        superseded: BTreeMap::from([(MUSEUM_ID.to_string(), strings(&["Louvain-la-Neuve"]))]),
    };
    (fixture, script)
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ra", "ven", "tor", "sel", "quin", "dar", "ul", "fe", "zan", "bri", "mel", "thu", "gar", "pe",
    "nix", "ro", "vas", "li", "dro", "sha", "ke",
];

/// Generator state for one synthetic world.
struct World {
    rng: ChaCha8Rng,
    prefix: String,
    next_id: usize,
    used_names: BTreeSet<String>,
    entities: Vec<EntityRecord>,
    triples: Vec<TripleRecord>,
}

struct Ent {
    id: String,
    name: String,
    aliases: Vec<String>,
}

impl World {
    fn word(&mut self) -> String {
        let n = self.rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..n {
            w.push_str(SYLLABLES.choose(&mut self.rng).expect("non-empty"));
        }
        let mut c = w.chars();
        let first = c.next().expect("non-empty").to_uppercase().collect::<String>();
        first + c.as_str()
    }

    fn entity(&mut self, image: Option<String>) -> Ent {
        let (first, last) = loop {
            let (a, b) = (self.word(), self.word());
            if self.used_names.insert(crate::normalize::normalize(&format!("{a} {b}"))) {
                break (a, b);
            }
        };
        self.next_id += 1;
        let id = format!("{}{}", self.prefix, self.next_id);
        let name = format!("{first} {last}");
        let mut aliases = vec![format!("{last}, {first}")];
        if self.rng.gen_bool(0.5) {
            aliases.push(format!("{first} {last} ({})", id.to_lowercase()));
        }
        self.entities.push(EntityRecord {
            id: id.clone(),
            name: name.clone(),
            aliases: aliases.clone(),
            image,
        });
        Ent { id, name, aliases }
    }

    fn fact(&mut self, head: &Ent, relation: &str, tail: &Ent) {
        self.triples.push(triple(&head.id, relation, &tail.id));
    }

    /// Adds 1 to 3 distractor facts on relations not in `avoid`.
    fn distractors(&mut self, head: &Ent, avoid: &[&str], pool: &[Ent]) {
        let n = self.rng.gen_range(1..=3);
        let mut options: Vec<&str> = RELATIONS
            .iter()
            .chain(LITERAL_RELATIONS)
            .copied()
            .filter(|r| !avoid.contains(r))
            .collect();
        options.shuffle(&mut self.rng);
        for rel in options.into_iter().take(n) {
            let tail = match rel {
                "inception" => format!("{}", self.rng.gen_range(1200..2020)),
                "population" => format!("{}", self.rng.gen_range(1_000..9_000_000)),
                _ => pool.choose(&mut self.rng).expect("non-empty pool").id.clone(),
            };
            self.triples.push(triple(&head.id, rel, &tail));
        }
    }
}

fn all_names(e: &Ent) -> Vec<String> {
    std::iter::once(e.name.clone()).chain(e.aliases.iter().cloned()).collect()
}

/// A consistent world with `per_hop` instances for each hop count 2 to 5.
///
/// Even-numbered instances carry an identity edit on the image (as in the
/// introduction's example); odd ones carry a fact edit at a random hop. Every
/// instance uses its own entities, so all edits can be applied to one graph.
pub fn synthetic(seed: u64, per_hop: usize) -> Fixture {
    let mut w = World {
        rng: ChaCha8Rng::seed_from_u64(seed),
        prefix: "S".into(),
        next_id: 0,
        used_names: BTreeSet::new(),
        entities: Vec::new(),
        triples: Vec::new(),
    };
    let pool: Vec<Ent> = (0..24)
        .map(|i| {
            let img = (i % 2 == 0).then(|| format!("syn/pool/{i}.jpg"));
            w.entity(img)
        })
        .collect();
    let mut instances = Vec::new();
    let mut superseded = BTreeMap::new();

    let mut n = 0;
    for hops in 2..=5usize {
        for _ in 0..per_hop {
            let id = format!("syn-{hops}h-{n:03}");
            let image = format!("syn/{id}/v.jpg");
            let rephrased = format!("syn/{id}/v_alt.jpg");
            let rels: Vec<&str> = (0..hops - 1)
                .map(|_| *RELATIONS.choose(&mut w.rng).expect("non-empty"))
                .collect();
            let name_edit = n % 2 == 0;

            // Hop index of a fact edit; its post-edit fact comes from the edit.
            let edited_hop = (!name_edit).then(|| w.rng.gen_range(0..hops - 1));
            let chain: Vec<Ent> = (0..hops)
                .map(|k| w.entity((k == 0 && !name_edit).then(|| image.clone())))
                .collect();
            for k in 0..hops - 1 {
                if edited_hop != Some(k) {
                    w.fact(&chain[k], rels[k], &chain[k + 1]);
                }
            }

            // The obsolete branch: the chain as it read before the edit.
            let (edit, old_branch) = if name_edit {
                let decoy = w.entity(Some(image.clone()));
                w.triples.push(triple(&decoy.id, NAME_RELATION, &decoy.id));
                let mut branch = vec![decoy];
                for rel in &rels {
                    let next = w.entity(None);
                    w.fact(branch.last().expect("non-empty"), rel, &next);
                    branch.push(next);
                }
                let edit = EditQuadruple {
                    subject: branch[0].name.clone(),
                    image: Some(ImageRef::new(image.clone())),
                    relation: NAME_RELATION.into(),
                    old: branch[0].name.clone(),
                    new: chain[0].name.clone(),
                };
                (edit, branch)
            } else {
                let j = edited_hop.expect("fact edit");
                let mut branch = vec![w.entity(None)];
                w.fact(&chain[j], rels[j], &branch[0]);
                for rel in &rels[j + 1..] {
                    let next = w.entity(None);
                    w.fact(branch.last().expect("non-empty"), rel, &next);
                    branch.push(next);
                }
                let pick = |rng: &mut ChaCha8Rng, e: &Ent| {
                    if rng.gen_bool(0.3) {
                        e.aliases[0].clone()
                    } else {
                        e.name.clone()
                    }
                };
                let edit = EditQuadruple {
                    subject: chain[j].name.clone(),
                    image: None,
                    relation: rels[j].into(),
                    old: pick(&mut w.rng, &branch[0]),
                    new: pick(&mut w.rng, &chain[j + 1]),
                };
                (edit, branch)
            };

            for (k, e) in chain.iter().enumerate() {
                let avoid: Vec<&str> = rels.get(k).into_iter().copied().collect();
                w.distractors(e, &avoid, &pool);
            }
            for (k, e) in old_branch.iter().enumerate() {
                let offset = hops - old_branch.len();
                let avoid: Vec<&str> = rels.get(k + offset).into_iter().copied().collect();
                w.distractors(e, &avoid, &pool);
            }

            let mut gold = vec![HopGold {
                subject: IMAGE_TOKEN.into(),
                relation: NAME_RELATION.into(),
                answers: all_names(&chain[0]),
            }];
            for k in 1..hops {
                gold.push(HopGold {
                    subject: chain[k - 1].name.clone(),
                    relation: rels[k - 1].into(),
                    answers: all_names(&chain[k]),
                });
            }
            let question = chain_question(&rels);
            let rephrase = format!("Regarding the pictured entity: {}", question.to_lowercase());
            superseded.insert(id.clone(), old_branch.iter().map(|e| e.name.clone()).collect());
            instances.push(MultihopInstance {
                id,
                question,
                paraphrases: vec![rephrase],
                image: ImageRef::new(image),
                image_rephrased: Some(ImageRef::new(rephrased)),
                edits: vec![edit],
                hops: gold,
                final_answers: None,
            });
            n += 1;
        }
    }
    Fixture {
        entities: w.entities,
        triples: w.triples,
        instances,
        superseded,
    }
}

/// The introduction's example plus 10 generated instances per hop count.
pub fn acceptance_fixture(seed: u64) -> Fixture {
    person_example().merge(synthetic(seed, 10))
}

/// Instance counts per hop count and distinct edits of the benchmark's
/// evaluation split.
pub const BENCHMARK_HOPS: [(usize, usize); 4] = [(2, 1278), (3, 1238), (4, 1193), (5, 1110)];
pub const BENCHMARK_EDITS: usize = 1278;

/// A dataset with the benchmark's hop distribution and edit count. It is
/// schema-valid and chain-consistent but has no backing graph; it exists
/// to exercise the loader at realistic size.
pub fn benchmark_dataset(seed: u64) -> Vec<MultihopInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edits: Vec<EditQuadruple> = (0..BENCHMARK_EDITS)
        .map(|i| EditQuadruple {
            subject: format!("Subject {i}"),
            image: None,
            relation: RELATIONS[i % RELATIONS.len()].into(),
            old: format!("Old object {i}"),
            new: format!("New object {i}"),
        })
        .collect();
    let mut out = Vec::new();
    let mut n = 0usize;
    for (hops, count) in BENCHMARK_HOPS {
        for _ in 0..count {
            let answers = |rng: &mut ChaCha8Rng, k: usize| -> Vec<String> {
                let extra = rng.gen_range(0..18);
                std::iter::once(format!("Answer {n}.{k}"))
                    .chain((0..extra).map(|a| format!("Answer {n}.{k} alias {a}")))
                    .collect()
            };
            let mut gold = vec![HopGold {
                subject: IMAGE_TOKEN.into(),
                relation: NAME_RELATION.into(),
                answers: answers(&mut rng, 1),
            }];
            let rels: Vec<&str> = (1..hops).map(|k| RELATIONS[(n + k) % RELATIONS.len()]).collect();
            for k in 2..=hops {
                gold.push(HopGold {
                    subject: format!("Answer {n}.{}", k - 1),
                    relation: rels[k - 2].into(),
                    answers: answers(&mut rng, k),
                });
            }
            out.push(MultihopInstance {
                id: format!("t2-{n:05}"),
                question: chain_question(&rels),
                paraphrases: Vec::new(),
                image: ImageRef::new(format!("t2/{n}.jpg")),
                image_rephrased: Some(ImageRef::new(format!("t2/{n}_alt.jpg"))),
                edits: vec![edits[n % BENCHMARK_EDITS].clone()],
                hops: gold,
                final_answers: None,
            });
            n += 1;
        }
    }
    out
}

/// Size of a synthetic ingest graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleSpec {
    pub entities: usize,
    pub imaged: usize,
    pub triples: usize,
}

impl ScaleSpec {
    /// The knowledge graph size reported for the benchmark.
    pub const BENCHMARK: ScaleSpec = ScaleSpec {
        entities: 58_542,
        imaged: 11_087,
        triples: 686_048,
    };
}

const SCALE_RELATIONS: usize = 48;

/// Writes `entities.jsonl` and `triples.jsonl` of a random graph of the
/// given size into `dir`. Heads are spread round-robin; about one tail in
/// four is a literal.
pub fn write_scale_graph(dir: &Path, spec: ScaleSpec, seed: u64) -> std::io::Result<(PathBuf, PathBuf)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ents = dir.join("entities.jsonl");
    let trips = dir.join("triples.jsonl");
    let mut out = BufWriter::new(std::fs::File::create(&ents)?);
    // Spread imaged entities evenly over the id range.
    for i in 0..spec.entities {
        let imaged = i * spec.imaged / spec.entities != (i + 1) * spec.imaged / spec.entities;
        let rec = EntityRecord {
            id: format!("E{i}"),
            name: format!("Scale entity {i}"),
            aliases: vec![format!("SE-{i}")],
            image: imaged.then(|| format!("scale/{i}.jpg")),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    let mut out = BufWriter::new(std::fs::File::create(&trips)?);
    for t in 0..spec.triples {
        let head = t % spec.entities;
        let rel = rng.gen_range(0..SCALE_RELATIONS);
        let tail = if rng.gen_bool(0.25) {
            format!("literal value {}", rng.gen_range(0..1_000_000))
        } else {
            format!("E{}", rng.gen_range(0..spec.entities))
        };
        let rec = triple(&format!("E{head}"), &format!("relation {rel}"), &tail);
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok((ents, trips))
}
