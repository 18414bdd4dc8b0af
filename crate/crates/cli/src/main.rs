fn main() {
    std::process::exit(kmed_cli::run(std::env::args_os()));
}
