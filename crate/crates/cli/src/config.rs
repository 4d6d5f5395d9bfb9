//! Expands `--config FILE` into ordinary flags placed before the user's own,
//! so flags given on the command line win.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{Context, Result};

fn take_config(argv: &mut Vec<OsString>) -> Result<Option<PathBuf>> {
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy().into_owned();
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            anyhow::ensure!(i + 1 < argv.len(), "--config needs a file name");
            let path = PathBuf::from(argv.remove(i + 1));
            argv.remove(i);
            return Ok(Some(path));
        }
        if let Some(p) = arg.strip_prefix("--config=") {
            let path = PathBuf::from(p);
            argv.remove(i);
            return Ok(Some(path));
        }
        i += 1;
    }
    Ok(None)
}

/// Flags equivalent to the settings in `text`. `true` becomes a bare
/// switch, `false` is dropped, other values split on whitespace.
pub fn settings_to_flags(text: &str) -> Result<Vec<OsString>> {
    let settings = stereokit::io::config::parse_config(text)?;
    let mut out = Vec::new();
    for (key, value) in settings {
        let flag = format!("--{}", key.replace('_', "-"));
        match value.as_str() {
            "true" => out.push(flag.into()),
            "false" => {}
            v => {
                out.push(flag.into());
                out.extend(v.split_whitespace().map(OsString::from));
            }
        }
    }
    Ok(out)
}

pub fn expand_config(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = take_config(&mut argv)? else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let flags = settings_to_flags(&text).with_context(|| format!("in config {}", path.display()))?;
    let sub = argv
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 2)
        .unwrap_or(argv.len());
    argv.splice(sub..sub, flags);
    Ok(argv)
}

pub fn echo(argv: &[OsString]) -> String {
    argv.iter()
        .map(|a| {
            let s = a.to_string_lossy();
            if s.is_empty() || s.contains(char::is_whitespace) {
                format!("{s:?}")
            } else {
                s.into_owned()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}
