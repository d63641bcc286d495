fn main() {
    std::process::exit(double_phase::cli::run(std::env::args_os()));
}
