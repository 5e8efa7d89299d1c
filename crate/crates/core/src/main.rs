fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TINYSNN_LOG", "error")).init();
    std::process::exit(tinysnn::cli::run(std::env::args_os()));
}
