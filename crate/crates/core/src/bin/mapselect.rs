use std::process::ExitCode;

fn main() -> ExitCode {
    let result = mapselect::cli::configure_threads()
        .and_then(|_| mapselect::cli::run(std::env::args_os(), &mut std::io::stdout().lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(mapselect::Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
