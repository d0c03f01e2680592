fn main() {
    std::process::exit(envbridge_core::server::run_cli(std::env::args_os()));
}
