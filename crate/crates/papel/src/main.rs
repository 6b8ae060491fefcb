fn main() {
    std::process::exit(papel::cli::run());
}
