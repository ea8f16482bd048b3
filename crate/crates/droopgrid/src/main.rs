use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(droopgrid::cli::run(std::env::args_os()) as u8)
}
