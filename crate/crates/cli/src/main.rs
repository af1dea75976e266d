fn main() {
    std::process::exit(logitlab_cli::run(std::env::args_os()));
}
