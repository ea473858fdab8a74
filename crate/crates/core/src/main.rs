fn main() {
    std::process::exit(continual_ad::harness::cli::main());
}
