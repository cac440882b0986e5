fn main() {
    std::process::exit(fairtree::cli::run(std::env::args_os()));
}
