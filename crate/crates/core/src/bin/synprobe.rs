fn main() {
    std::process::exit(synprobe::cli::run(std::env::args_os()));
}
