fn main() {
    std::process::exit(annotkit::cli::main());
}
