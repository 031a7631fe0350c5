fn main() {
    std::process::exit(vora_core::cli::main_with_args(std::env::args_os()));
}
