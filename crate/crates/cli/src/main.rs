fn main() {
    std::process::exit(pepper_cli::run(std::env::args_os()));
}
