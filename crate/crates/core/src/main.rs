fn main() {
    std::process::exit(switched_growth::cli::main_with(std::env::args_os()));
}
