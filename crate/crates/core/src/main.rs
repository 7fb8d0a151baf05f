fn main() {
    std::process::exit(stmforge::cli::run(std::env::args_os()));
}
