fn main() {
    std::process::exit(distrifs::cli::run(std::env::args_os()));
}
