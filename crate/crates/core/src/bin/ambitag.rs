use std::process::ExitCode;

fn main() -> ExitCode {
    ambitag::cli::main_with_args(std::env::args_os())
}
