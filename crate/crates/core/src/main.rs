fn main() {
    std::process::exit(weakkam::cli::run(std::env::args_os()));
}
