fn main() -> std::process::ExitCode {
    pcp::app::main()
}
