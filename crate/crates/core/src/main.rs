fn main() {
    std::process::exit(degschro::cli::run(std::env::args_os()));
}
