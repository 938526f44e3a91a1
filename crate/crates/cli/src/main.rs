fn main() {
    std::process::exit(graphssl_cli::run(std::env::args_os()));
}
