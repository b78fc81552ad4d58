fn main() {
    std::process::exit(boxloss::cli::run(std::env::args_os()));
}
