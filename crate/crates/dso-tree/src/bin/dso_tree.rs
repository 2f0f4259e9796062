fn main() {
    std::process::exit(dso_tree::cli::main_entry());
}
