fn main() {
    std::process::exit(nextcell::cli::main_with_args(std::env::args_os()));
}
