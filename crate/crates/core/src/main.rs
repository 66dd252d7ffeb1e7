fn main() {
    std::process::exit(wavecal::cli::run(std::env::args_os()));
}
