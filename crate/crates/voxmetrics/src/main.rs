fn main() {
    std::process::exit(voxmetrics::cli::run(std::env::args_os()));
}
