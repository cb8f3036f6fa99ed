fn main() {
    std::process::exit(motorstart::cli::run(std::env::args_os()));
}
