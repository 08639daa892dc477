fn main() {
    std::process::exit(srnas::cli::main_exit());
}
