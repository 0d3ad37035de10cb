use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(nephroscope::cli::run(std::env::args_os()))
}
