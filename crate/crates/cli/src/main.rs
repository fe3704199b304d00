fn main() {
    std::process::exit(psman_cli::main_with_args(std::env::args_os()));
}
