fn main() {
    std::process::exit(hybridfl::cli::main_with_args(std::env::args_os()));
}
