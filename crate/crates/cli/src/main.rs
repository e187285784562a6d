use std::panic;
use std::process::ExitCode;

fn main() -> ExitCode {
    let code = panic::catch_unwind(|| curricula_cli::run(std::env::args_os())).unwrap_or(2);
    ExitCode::from(code as u8)
}
