fn main() {
    std::process::exit(epkit::cli::main_with_args(std::env::args_os()));
}
