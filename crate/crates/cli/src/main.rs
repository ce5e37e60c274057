fn main() {
    std::process::exit(fet_cli::run(std::env::args_os()));
}
