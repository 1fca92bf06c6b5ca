fn main() {
    std::process::exit(vvad::cli::dispatch(std::env::args_os()));
}
