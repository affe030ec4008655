fn main() {
    std::process::exit(helmprop::cli::main_with(std::env::args_os()));
}
