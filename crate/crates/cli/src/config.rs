//! Flag values from a JSON config file.
//!
//! A config file is a JSON object whose keys are long flag names of the
//! chosen subcommand (with or without the leading `--`). Its values are
//! spliced into the argument list right after the subcommand name, skipping
//! any flag the user also typed, so command-line flags always win.

use std::ffi::OsString;
use std::path::Path;

use serde_json::Value;

use crate::CliError;

/// Removes `--config FILE` / `--config=FILE` from `args`, returning the path.
fn take_config_path(args: &mut Vec<OsString>) -> Result<Option<OsString>, CliError> {
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy().into_owned();
        if a == "--" {
            break;
        }
        if a == "--config" {
            if i + 1 >= args.len() {
                return Err(CliError::new("config", "--config needs a file path"));
            }
            args.remove(i);
            return Ok(Some(args.remove(i)));
        }
        if let Some(path) = a.strip_prefix("--config=") {
            let path = OsString::from(path);
            args.remove(i);
            return Ok(Some(path));
        }
        i += 1;
    }
    Ok(None)
}

fn flag_values(key: &str, value: &Value) -> Result<Vec<OsString>, CliError> {
    let flag = format!("--{}", key.trim_start_matches("--"));
    let scalar = |v: &Value| -> Result<String, CliError> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            Value::Bool(b) => Ok(b.to_string()),
            other => Err(CliError::new(
                "config",
                format!("unsupported value for {key:?}: {other}"),
            )),
        }
    };
    Ok(match value {
        Value::Bool(true) => vec![flag.into()],
        Value::Bool(false) | Value::Null => Vec::new(),
        Value::Array(items) => {
            let joined = items
                .iter()
                .map(scalar)
                .collect::<Result<Vec<_>, _>>()?
                .join(",");
            vec![flag.into(), joined.into()]
        }
        other => vec![flag.into(), scalar(other)?.into()],
    })
}

fn user_sets(args: &[OsString], flag: &str) -> bool {
    let with_eq = format!("{flag}=");
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&with_eq)
    })
}

/// Applies a `--config` file, if any, to the raw argument list.
pub fn expand_config(
    mut args: Vec<OsString>,
    subcommands: &[&str],
) -> Result<Vec<OsString>, CliError> {
    let Some(path) = take_config_path(&mut args)? else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new("config", format!("cannot read {}: {e}", path.display())))?;
    let Value::Object(map) = serde_json::from_str::<Value>(&text)
        .map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?
    else {
        return Err(CliError::new(
            "config",
            "config file must hold a JSON object",
        ));
    };
    let Some(sub_at) = args
        .iter()
        .position(|a| subcommands.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(args);
    };
    let mut injected = Vec::new();
    for (key, value) in &map {
        let flag = format!("--{}", key.trim_start_matches("--"));
        if !user_sets(&args[sub_at + 1..], &flag) {
            injected.extend(flag_values(key, value)?);
        }
    }
    args.splice(sub_at + 1..sub_at + 1, injected);
    Ok(args)
}
