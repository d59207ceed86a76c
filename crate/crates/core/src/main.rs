fn main() {
    std::process::exit(bondmid::cli::run_from_args(std::env::args_os()));
}
