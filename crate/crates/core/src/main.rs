fn main() {
    std::process::exit(locnpg::cli::run(std::env::args_os()));
}
