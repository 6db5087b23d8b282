fn main() {
    std::process::exit(smsat_core::cli::main_with_args(std::env::args_os()));
}
