fn main() {
    std::process::exit(symspot::cli::main_with_args(std::env::args_os()));
}
