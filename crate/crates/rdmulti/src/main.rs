fn main() {
    std::process::exit(rdmulti::cli::run(std::env::args_os()));
}
