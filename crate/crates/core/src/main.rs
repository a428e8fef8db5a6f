fn main() {
    let code = viability::cli::run(std::env::args());
    std::process::exit(code);
}
