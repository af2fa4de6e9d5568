fn main() {
    std::process::exit(prime_poisson_cli::run_from_args(std::env::args_os()));
}
