fn main() {
    std::process::exit(hybrid_dmkg::cli::main_with_args(std::env::args_os()));
}
