fn main() {
    std::process::exit(mwcb_cli::main_with(std::env::args_os()));
}
