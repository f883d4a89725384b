fn main() {
    std::process::exit(mcchrl::harness::cli_main(std::env::args_os()));
}
