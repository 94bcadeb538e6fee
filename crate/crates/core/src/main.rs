fn main() {
    std::process::exit(feedback_lens::cli::run());
}
