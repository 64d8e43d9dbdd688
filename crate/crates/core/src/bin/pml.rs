fn main() {
    std::process::exit(pml_core::cli::main_entry());
}
