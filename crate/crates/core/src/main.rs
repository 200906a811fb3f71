fn main() {
    std::process::exit(graphbreak::cli::run(std::env::args()));
}
