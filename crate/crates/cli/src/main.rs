use std::process::ExitCode;

fn main() -> ExitCode {
    let code = std::panic::catch_unwind(|| aadt_cli::run_from(std::env::args_os())).unwrap_or_else(|_| {
        eprintln!("error: internal failure");
        3
    });
    ExitCode::from(code as u8)
}
