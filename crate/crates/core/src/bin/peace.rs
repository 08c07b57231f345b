fn main() {
    std::process::exit(peace::cli::main());
}
