fn main() {
    std::process::exit(envbridge::run(std::env::args_os()));
}
