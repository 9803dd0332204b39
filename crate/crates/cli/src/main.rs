fn main() {
    std::process::exit(mgarch_cli::run(std::env::args_os()));
}
