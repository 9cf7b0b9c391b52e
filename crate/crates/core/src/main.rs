fn main() {
    std::process::exit(edgesel::cli::main_with_args(std::env::args_os()));
}
