fn main() -> std::process::ExitCode {
    ggv::cli::main()
}
