fn main() {
    std::process::exit(calens::cli::run(std::env::args_os()));
}
