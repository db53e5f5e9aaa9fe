fn main() {
    std::process::exit(cbe_core::cli::main_with_args(std::env::args_os()));
}
