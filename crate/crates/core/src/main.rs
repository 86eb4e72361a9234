fn main() {
    std::process::exit(visaid::cli::run(std::env::args_os()));
}
