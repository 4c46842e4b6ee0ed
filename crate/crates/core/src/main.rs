fn main() {
    std::process::exit(spoken_digits::cli::run_cli(std::env::args_os()));
}
