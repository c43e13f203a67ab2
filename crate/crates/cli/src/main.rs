fn main() {
    std::process::exit(ivboot_cli::run(std::env::args_os()));
}
