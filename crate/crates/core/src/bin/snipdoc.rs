fn main() {
    std::process::exit(snipdoc::cli::main_with_args(std::env::args_os()));
}
