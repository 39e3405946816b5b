fn main() {
    std::process::exit(switchctl::cli::main_with_args(std::env::args_os()));
}
