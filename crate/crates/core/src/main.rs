fn main() {
    std::process::exit(rop_core::cli::run(std::env::args_os()));
}
