fn main() {
    std::process::exit(offgrid::cli::main_with_args(std::env::args_os()));
}
