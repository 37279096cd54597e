fn main() {
    std::process::exit(prores::cli::main_with_args(std::env::args_os()));
}
