fn main() {
    std::process::exit(hmaj::cli::main_with_args(std::env::args_os()));
}
