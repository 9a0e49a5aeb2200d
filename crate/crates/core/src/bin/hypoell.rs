fn main() {
    std::process::exit(hypoell::cli::main_with_args(std::env::args_os()));
}
