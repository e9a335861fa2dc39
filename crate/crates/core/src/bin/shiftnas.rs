fn main() {
    std::process::exit(shiftnas::cli::main_with_args(std::env::args_os()));
}
