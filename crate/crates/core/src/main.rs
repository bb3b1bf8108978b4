fn main() {
    std::process::exit(noisecov::cli::run_from(std::env::args_os()));
}
