fn main() {
    std::process::exit(bffg::cli::main());
}
