fn main() {
    std::process::exit(actorlab::cli::run_from_env());
}
