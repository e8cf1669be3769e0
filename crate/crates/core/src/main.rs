fn main() {
    std::process::exit(mrnel::cli::run(std::env::args_os()));
}
