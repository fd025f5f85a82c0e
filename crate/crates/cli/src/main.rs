fn main() {
    std::process::exit(ubrl_cli::run(std::env::args_os()));
}
