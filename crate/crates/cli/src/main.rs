fn main() {
    std::process::exit(ou_cutoff_cli::main_with_args(std::env::args_os()));
}
