fn main() {
    std::process::exit(facerep_cli::run(std::env::args_os()));
}
