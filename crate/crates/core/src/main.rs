fn main() {
    std::process::exit(lesioncam::cli::run(std::env::args_os()));
}
