fn main() {
    std::process::exit(tcnn::cli::run_cli(std::env::args_os()));
}
