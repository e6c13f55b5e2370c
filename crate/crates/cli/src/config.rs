//! Flat `key = value` config files, spliced into the argument list right
//! after the subcommand so that flags given on the command line win.

use std::ffi::OsString;
use std::path::Path;

use crate::error::{CliError, CliResult};

pub const SUBCOMMANDS: [&str; 4] = ["run", "sweep-lambda", "metrics", "gen-fixture"];

/// Turns config lines into `--key=value` flags. Blank lines and `#`
/// comments are skipped; underscores in keys become hyphens.
pub fn parse_config(text: &str, path: &Path) -> CliResult<Vec<OsString>> {
    let mut flags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::usage(format!(
                "{}:{}: expected `key = value`, got `{line}`",
                path.display(),
                i + 1
            )));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(CliError::usage(format!(
                "{}:{}: invalid key",
                path.display(),
                i + 1
            )));
        }
        let value = value.trim().trim_matches('"');
        flags.push(OsString::from(format!("--{key}={value}")));
    }
    Ok(flags)
}

/// Removes `--config PATH` / `--config=PATH` from `args` and inserts the
/// file's flags directly after the subcommand name.
pub fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut out = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy();
        if text == "--config" {
            let path = iter
                .next()
                .ok_or_else(|| CliError::usage("--config needs a file path"))?;
            config = Some(path);
        } else if let Some(path) = text.strip_prefix("--config=") {
            config = Some(OsString::from(path));
        } else {
            out.push(arg);
        }
    }
    let Some(path) = config else {
        return Ok(out);
    };
    let path = Path::new(&path).to_path_buf();
    let text = std::fs::read_to_string(&path).map_err(|source| CliError::Read {
        path: path.clone(),
        source,
    })?;
    let flags = parse_config(&text, &path)?;
    let at = out
        .iter()
        .position(|a| SUBCOMMANDS.iter().any(|s| a == s))
        .ok_or_else(|| CliError::usage("--config needs a subcommand"))?;
    out.splice(at + 1..at + 1, flags);
    Ok(out)
}
