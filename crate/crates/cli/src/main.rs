fn main() {
    std::process::exit(nltraffic_cli::main_with_args(std::env::args_os()));
}
