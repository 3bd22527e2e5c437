fn main() {
    std::process::exit(ipd::cli::run(std::env::args_os()));
}
