fn main() {
    std::process::exit(fusedstyle_cli::run(std::env::args_os().collect()));
}
