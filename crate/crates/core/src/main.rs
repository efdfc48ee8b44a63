fn main() {
    std::process::exit(rpo::cli::main_with_args(std::env::args_os()));
}
