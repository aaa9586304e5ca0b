fn main() {
    std::process::exit(lexmarket::cli::main_entry());
}
