use std::process::ExitCode;

fn main() -> ExitCode {
    let env = sdcd_cli::EnvOverrides::from_process();
    let code = match sdcd_cli::run(std::env::args_os(), &env) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    ExitCode::from(code)
}
