fn main() {
    std::process::exit(idxtrack::cli::run(std::env::args_os()));
}
