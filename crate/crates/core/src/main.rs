fn main() {
    std::process::exit(epithreshold::cli::run_cli(std::env::args_os()));
}
