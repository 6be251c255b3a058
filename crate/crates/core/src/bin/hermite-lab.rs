fn main() {
    std::process::exit(hermite_lab::cli::main_with_args(std::env::args_os()));
}
