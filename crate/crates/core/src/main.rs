fn main() {
    std::process::exit(uamil::cli::run_cli(std::env::args_os()));
}
