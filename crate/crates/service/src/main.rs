fn main() -> std::process::ExitCode {
    mlaudit_service::cli::main()
}
