fn main() {
    std::process::exit(gne::cli::main_with_args(std::env::args_os()));
}
