fn main() {
    std::process::exit(fiberdeconv::cli::run(std::env::args_os()));
}
