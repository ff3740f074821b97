fn main() {
    std::process::exit(gnp::cli::main_with_args(std::env::args_os().collect()));
}
