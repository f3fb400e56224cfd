fn main() {
    std::process::exit(msregime::cli::run(std::env::args_os()));
}
