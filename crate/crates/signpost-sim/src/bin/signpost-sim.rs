fn main() -> std::process::ExitCode {
    signpost_sim::cli::main()
}
