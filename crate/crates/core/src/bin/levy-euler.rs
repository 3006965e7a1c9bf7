fn main() {
    std::process::exit(levy_euler::cli::main_with_args(std::env::args_os()));
}
