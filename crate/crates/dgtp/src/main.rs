fn main() {
    std::process::exit(dgtp::cli::main_entry());
}
