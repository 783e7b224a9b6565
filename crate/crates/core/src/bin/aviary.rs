fn main() {
    std::process::exit(aviary::cli::run(std::env::args_os()));
}
