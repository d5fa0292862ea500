fn main() {
    std::process::exit(spatmca::cli::run());
}
