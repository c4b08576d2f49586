fn main() {
    std::process::exit(cosfuse::cli::run());
}
