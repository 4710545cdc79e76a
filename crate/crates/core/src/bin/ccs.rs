fn main() {
    env_logger::init();
    std::process::exit(ccs::cli::run(std::env::args_os()));
}
