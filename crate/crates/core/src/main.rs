fn main() -> std::process::ExitCode {
    acfp::cli::main()
}
