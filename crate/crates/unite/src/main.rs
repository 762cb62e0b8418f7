fn main() {
    std::process::exit(unite::cli::main_with_args(std::env::args_os()));
}
