fn main() {
    std::process::exit(qresgan::cli::main_with_args(std::env::args_os()));
}
