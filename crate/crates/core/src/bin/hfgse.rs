fn main() {
    std::process::exit(hfgse::cli::run(std::env::args_os()));
}
