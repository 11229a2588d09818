fn main() {
    std::process::exit(clusteq::cli::run(std::env::args_os()));
}
