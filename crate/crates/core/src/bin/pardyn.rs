fn main() {
    std::process::exit(pardyn::cli::run(std::env::args_os()));
}
