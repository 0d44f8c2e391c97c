fn main() {
    std::process::exit(isv::cli::run(std::env::args_os()));
}
