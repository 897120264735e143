fn main() {
    std::process::exit(gapdiag::cli::run(std::env::args_os()));
}
