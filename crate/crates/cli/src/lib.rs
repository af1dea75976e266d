//! Command-line front end: argument parsing, run manifests and reports.

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub mod args;
mod commands;
pub mod manifest;
pub mod report;

pub use args::Cli;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Input(_) => "input",
            CliError::Numeric(_) => "numeric",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Numeric(m) => m,
        }
    }

    /// `error: kind=<kind> code=<n> message="<escaped>"`
    pub fn line(&self) -> String {
        let escaped: String = self
            .message()
            .chars()
            .flat_map(|c| match c {
                '"' => vec!['\\', '"'],
                '\\' => vec!['\\', '\\'],
                '\n' => vec!['\\', 'n'],
                '\r' => vec![],
                c => vec![c],
            })
            .collect();
        format!("error: kind={} code={} message=\"{}\"", self.kind(), self.code(), escaped)
    }
}

impl From<logitlab::Error> for CliError {
    fn from(e: logitlab::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

/// Parse `argv` (program name first), run the subcommand and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(std::io::stdout(), "{e}");
                return 0;
            }
            let text = e.to_string();
            let msg = text
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
            let msg = msg.strip_prefix("error: ").unwrap_or(&msg).to_string();
            return fail(CliError::Usage(msg));
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> i32 {
    eprintln!("{}", e.line());
    e.code()
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?;
            pool.install(|| commands::dispatch(cli.command))
        }
        None => commands::dispatch(cli.command),
    }
}
