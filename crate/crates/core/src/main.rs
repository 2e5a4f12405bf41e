fn main() {
    std::process::exit(fharmonic::cli::run(std::env::args_os()));
}
