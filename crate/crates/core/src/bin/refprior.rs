fn main() {
    std::process::exit(refprior::cli::main_with_args(std::env::args_os()));
}
