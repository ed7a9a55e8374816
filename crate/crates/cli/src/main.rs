use std::process::ExitCode;

use clap::Parser;
use ebdnn_cli::{execute, Cli, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let msg: Vec<&str> = rendered.lines().take_while(|l| !l.trim().is_empty()).map(str::trim).collect();
            let msg = msg.join(" ");
            eprintln!("{}", CliError::Usage(msg.trim_start_matches("error: ").to_string()).to_json_line());
            return ExitCode::from(2);
        }
    };
    match execute(&cli.command) {
        Ok(out) => {
            for path in &out.written {
                println!("{}", path.display());
            }
            eprintln!("{}: {} ({:.2} s)", cli.command.name(), out.summary, out.runtime.as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::FAILURE
        }
    }
}
