fn main() {
    std::process::exit(hsom::cli::run(std::env::args_os()));
}
