fn main() {
    std::process::exit(vicalib::cli::run(std::env::args_os()));
}
