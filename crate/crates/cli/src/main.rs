fn main() {
    std::process::exit(kafgp_cli::run(std::env::args_os().collect()));
}
