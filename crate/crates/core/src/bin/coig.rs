fn main() {
    std::process::exit(coig_core::cli::main());
}
