use std::process::ExitCode;

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("MMN_NUM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| format!("MMN_NUM_THREADS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err("MMN_NUM_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match mmn_cli::run_from_args(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
