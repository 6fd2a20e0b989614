use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(dpp_replay::harness::cli::cli(std::env::args()) as u8)
}
