fn main() {
    std::process::exit(solcon::cli::run());
}
