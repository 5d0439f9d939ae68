fn main() {
    std::process::exit(shrinkstab::cli::main_with_args(std::env::args_os()));
}
