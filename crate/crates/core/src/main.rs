fn main() {
    std::process::exit(relight_core::cli::run(std::env::args_os()));
}
