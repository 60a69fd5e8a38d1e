//! Flat `key=value` config files. Keys mirror long flag names; the file's
//! entries are spliced into the argument list ahead of the user's own flags,
//! so flags on the command line win.

use std::fs;

/// Options that belong before the subcommand.
const GLOBAL: [&str; 2] = ["config", "jobs"];

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value, got '{line}'", n + 1))?;
        let k = k.trim().trim_start_matches("--");
        if k.is_empty() {
            return Err(format!("config line {}: empty key", n + 1));
        }
        out.push((k.replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

fn takes_value(tok: &str) -> bool {
    GLOBAL.iter().any(|g| tok == format!("--{g}"))
}

/// Position of the first token naming a subcommand, if any.
fn subcommand_index(args: &[String], names: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        if takes_value(&args[i]) {
            i += 2;
        } else if names.contains(&args[i]) {
            return Some(i);
        } else {
            i += 1;
        }
    }
    None
}

fn config_path(args: &[String]) -> Option<String> {
    let mut path = None;
    for (i, tok) in args.iter().enumerate() {
        if tok == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = tok.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    path
}

/// Returns `args` with the config file's entries inserted; `names` are the
/// known subcommands.
pub fn merge_args(args: Vec<String>, names: &[String]) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config '{path}': {e}"))?;
    Ok(splice(args, &parse(&text)?, names))
}

fn splice(args: Vec<String>, entries: &[(String, String)], names: &[String]) -> Vec<String> {
    let flag = |k: &str, v: &str| format!("--{k}={v}");
    let local: Vec<String> = entries
        .iter()
        .filter(|(k, _)| k != "subcommand" && !GLOBAL.contains(&k.as_str()))
        .map(|(k, v)| flag(k, v))
        .collect();
    let global: Vec<String> = entries
        .iter()
        .filter(|(k, _)| k == "jobs")
        .map(|(k, v)| flag(k, v))
        .collect();
    let mut out = vec![args[0].clone()];
    out.extend(global);
    if let Some(at) = subcommand_index(&args, names) {
        out.extend_from_slice(&args[1..=at]);
        out.extend(local);
        out.extend_from_slice(&args[at + 1..]);
        return out;
    }
    let Some(sub) = entries.iter().find(|(k, _)| k == "subcommand") else {
        out.extend_from_slice(&args[1..]);
        return out;
    };
    // no subcommand on the command line: globals first, the rest after
    let mut rest = Vec::new();
    let mut i = 1;
    while i < args.len() {
        if takes_value(&args[i]) {
            out.extend_from_slice(&args[i..(i + 2).min(args.len())]);
            i += 2;
        } else if GLOBAL.iter().any(|g| args[i].starts_with(&format!("--{g}="))) {
            out.push(args[i].clone());
            i += 1;
        } else {
            rest.push(args[i].clone());
            i += 1;
        }
    }
    out.push(sub.1.clone());
    out.extend(local);
    out.extend(rest);
    out
}
