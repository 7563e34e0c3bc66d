use std::process::ExitCode;

fn main() -> ExitCode {
    tiepref::cli::run(std::env::args_os())
}
