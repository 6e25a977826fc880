use std::process::exit;

fn main() {
    exit(persalloc::cli::run(std::env::args_os()));
}
