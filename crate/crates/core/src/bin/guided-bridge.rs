fn main() {
    std::process::exit(guided_bridge::cli::run(std::env::args_os()));
}
