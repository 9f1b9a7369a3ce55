fn main() {
    std::process::exit(forumqa::cli::cli_main());
}
