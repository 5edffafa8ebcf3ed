fn main() {
    std::process::exit(perc_cli::run_command(std::env::args().collect()));
}
