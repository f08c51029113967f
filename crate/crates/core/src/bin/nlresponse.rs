fn main() {
    std::process::exit(nonlinear_response::cli::run_cli(std::env::args_os()));
}
