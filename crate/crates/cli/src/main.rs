fn main() {
    std::process::exit(apnea_cli::run(std::env::args_os()));
}
