fn main() {
    std::process::exit(concorde::cli::main_with_args(std::env::args_os()));
}
