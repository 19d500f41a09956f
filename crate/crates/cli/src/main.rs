fn main() {
    std::process::exit(rfnode_cli::run(std::env::args_os()));
}
