fn main() {
    std::process::exit(symmatch::cli::run(std::env::args_os()));
}
