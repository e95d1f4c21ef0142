fn main() {
    std::process::exit(gamspline_cli::main_with_args(std::env::args_os()));
}
