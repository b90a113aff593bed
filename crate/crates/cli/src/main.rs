fn main() -> std::process::ExitCode {
    cot_lab::main()
}
