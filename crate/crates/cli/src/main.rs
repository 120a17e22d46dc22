use std::process::ExitCode;

use clap::Parser;
use clap::error::ErrorKind;

use aui_rl_cli::output::{error_kind, error_line};
use aui_rl_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AUI_RL_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let message = first.trim_start_matches("error: ");
            eprintln!("{}", serde_json::json!({"error": "usage", "message": message}));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_line(&err));
            if error_kind(&err) == "verify_failed" {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
