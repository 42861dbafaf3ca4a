fn main() -> std::process::ExitCode {
    clms::cli::main()
}
