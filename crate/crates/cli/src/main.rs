fn main() {
    std::process::exit(lunareg_cli::dispatch(std::env::args_os()));
}
