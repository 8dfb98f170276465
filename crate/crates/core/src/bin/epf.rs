fn main() -> std::process::ExitCode {
    epf_core::cli::main()
}
