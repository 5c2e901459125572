fn main() {
    std::process::exit(sgumlp::cli::run(std::env::args_os()));
}
