//! Config files: a TOML table per subcommand whose keys are long flag
//! names. Values in the file replace the same flags given on the command
//! line.

use std::ffi::OsString;
use std::path::Path;

use clap::Command;

use crate::error::{CliResult, Failure};

fn find_arg<'a>(cmd: &'a Command, long: &str) -> Option<&'a clap::Arg> {
    cmd.get_arguments().find(|a| a.get_long() == Some(long))
}

fn scalar(key: &str, v: &toml::Value) -> CliResult<String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        other => Err(Failure::input(format!("config key {key:?}: unsupported value {other}"))),
    }
}

/// Rewrites `argv` so that flags set in `config` under `[subcommand]` take
/// precedence over the same flags on the command line.
pub fn apply_config(root: &Command, argv: Vec<OsString>, config: &Path, subcommand: &str) -> CliResult<Vec<OsString>> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| Failure::input(format!("cannot read config {}: {e}", config.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| Failure::input(format!("config {}: {e}", config.display())))?;
    for (k, v) in &table {
        if !v.is_table() {
            return Err(Failure::input(format!(
                "config key {k:?} must sit under a [subcommand] table"
            )));
        }
    }
    let Some(section) = table.get(subcommand).and_then(toml::Value::as_table) else {
        return Ok(argv);
    };
    let mut root = root.clone();
    root.build();
    let sub = root
        .find_subcommand(subcommand)
        .ok_or_else(|| Failure::input(format!("unknown subcommand {subcommand}")))?;

    let mut argv = argv;
    let mut extra: Vec<OsString> = Vec::new();
    for (key, value) in section {
        let long = key.replace('_', "-");
        let arg = find_arg(sub, &long)
            .or_else(|| find_arg(&root, &long))
            .ok_or_else(|| Failure::input(format!("config key {key:?} is not a flag of {subcommand}")))?;
        if long == "config" {
            return Err(Failure::input("a config file cannot name another config file"));
        }
        let takes_value = arg.get_action().takes_values();
        argv = strip_flag(argv, &long, takes_value);
        let flag = OsString::from(format!("--{long}"));
        match value {
            toml::Value::Boolean(b) if !takes_value => {
                if *b {
                    extra.push(flag);
                }
            }
            toml::Value::Array(items) if takes_value => {
                for item in items {
                    extra.push(flag.clone());
                    extra.push(scalar(key, item)?.into());
                }
            }
            v if takes_value => {
                extra.push(flag);
                extra.push(scalar(key, v)?.into());
            }
            _ => return Err(Failure::input(format!("config key {key:?} expects true or false"))),
        }
    }
    argv.extend(extra);
    Ok(argv)
}

fn strip_flag(argv: Vec<OsString>, long: &str, takes_value: bool) -> Vec<OsString> {
    let bare = format!("--{long}");
    let with_eq = format!("--{long}=");
    let mut out = Vec::with_capacity(argv.len());
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == bare {
            if takes_value {
                it.next();
            }
        } else if !s.starts_with(&with_eq) {
            out.push(a);
        }
    }
    out
}
