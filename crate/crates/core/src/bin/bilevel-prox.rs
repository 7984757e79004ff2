fn main() {
    std::process::exit(bilevel_prox::cli::main_with_args(std::env::args_os()));
}
