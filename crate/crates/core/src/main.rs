fn main() {
    std::process::exit(fraccap::cli::run(std::env::args_os()));
}
