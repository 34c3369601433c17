//! `key = value` config files merged underneath command-line flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use clap::Command;

use crate::CliError;

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected 'key = value', got {line:?}", i + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("{origin}:{}: empty key", i + 1)));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!("{origin}:{}: duplicate key '{key}'", i + 1)));
        }
    }
    Ok(out)
}

/// Keys a subcommand accepts: the long names of its value-taking options.
pub fn accepted_keys(cmd: &Command) -> Vec<String> {
    cmd.get_arguments()
        .filter(|a| a.get_action().takes_values())
        .filter_map(|a| a.get_long().map(str::to_string))
        .filter(|k| k != "config")
        .collect()
}

/// Rewrites `argv` so that values from `--config FILE` precede the flags given
/// on the command line. Options override themselves, so flags win.
pub fn expand_config(root: &Command, argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(sub_pos) = argv.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|p| p + 1) else {
        return Ok(argv);
    };
    let sub_name = argv[sub_pos].to_string_lossy().into_owned();
    let Some(sub) = root.find_subcommand(&sub_name) else {
        return Ok(argv);
    };
    let rest = &argv[sub_pos + 1..];
    let mut config_path = None;
    for (i, arg) in rest.iter().enumerate() {
        let s = arg.to_string_lossy();
        if let Some(v) = s.strip_prefix("--config=") {
            config_path = Some(v.to_string());
        } else if s == "--config" {
            config_path = rest.get(i + 1).map(|v| v.to_string_lossy().into_owned());
        }
    }
    let Some(path) = config_path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::Usage(format!("cannot read config file {path}: {e}")))?;
    let values = parse_config(&text, &path)?;
    let keys = accepted_keys(sub);
    let mut injected = Vec::new();
    for (key, value) in values {
        if !keys.contains(&key) {
            return Err(CliError::Usage(format!(
                "{path}: unknown key '{key}' for '{sub_name}' (accepted: {})",
                keys.join(", ")
            )));
        }
        injected.push(OsString::from(format!("--{key}={value}")));
    }
    let mut out: Vec<OsString> = argv[..=sub_pos].to_vec();
    out.extend(injected);
    out.extend(rest.iter().cloned());
    Ok(out)
}
