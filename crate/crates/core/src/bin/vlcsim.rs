fn main() {
    std::process::exit(vlcsim::cli::main_with_args(std::env::args_os()));
}
