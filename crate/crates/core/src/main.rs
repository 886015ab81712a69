fn main() { std::process::exit(peerlens::cli::main_with_args(std::env::args_os())); }
