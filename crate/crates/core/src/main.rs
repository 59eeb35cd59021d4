fn main() {
    std::process::exit(backstep::cli::main_with_args(std::env::args_os()));
}
