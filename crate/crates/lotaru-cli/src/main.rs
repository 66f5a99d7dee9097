fn main() {
    std::process::exit(lotaru_cli::run(std::env::args_os()));
}
