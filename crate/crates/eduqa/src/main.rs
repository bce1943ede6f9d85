fn main() -> std::process::ExitCode {
    eduqa::cli::run(std::env::args_os())
}
