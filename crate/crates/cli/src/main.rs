fn main() {
    std::process::exit(hgp_cli::main_with(std::env::args_os()));
}
