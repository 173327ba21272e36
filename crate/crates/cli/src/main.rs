fn main() {
    std::process::exit(islsim_cli::cli::main_with(std::env::args_os()));
}
