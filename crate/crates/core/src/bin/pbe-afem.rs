fn main() {
    std::process::exit(pbe_afem::cli::run_from(std::env::args_os()));
}
