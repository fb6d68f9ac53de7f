fn main() {
    std::process::exit(bertprep::cli::main_with_args(std::env::args_os()));
}
