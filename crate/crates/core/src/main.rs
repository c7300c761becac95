fn main() {
    env_logger::init();
    std::process::exit(nrmdl::cli::run(std::env::args_os()));
}
