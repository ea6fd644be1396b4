fn main() {
    std::process::exit(trajgrid::cli::run(std::env::args_os()));
}
