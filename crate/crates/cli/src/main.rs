fn main() {
    slide_mil_cli::init_logging();
    std::process::exit(slide_mil_cli::run(std::env::args_os()));
}
