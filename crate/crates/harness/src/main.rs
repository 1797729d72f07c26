fn main() {
    std::process::exit(posmech_harness::cli::main_with(std::env::args_os()));
}
