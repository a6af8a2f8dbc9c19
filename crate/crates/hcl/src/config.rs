//! Wheel config files and the default config directory.

use std::path::{Path, PathBuf};

use anyhow::Context;
use hcl_core::wheel::WheelConfig;

/// Environment variable naming the directory searched for `wheel.json` when
/// no wheel file is given.
pub const CONFIG_DIR_ENV: &str = "HCL_CONFIG_DIR";

/// The wheel shipped with the tool.
pub const BUILTIN_WHEEL: &str = include_str!("../config/wheel.json");

/// Parses a wheel document: an object mapping each label to its angle in
/// degrees, or to `null` for the neutral label.
pub fn parse_wheel(text: &str) -> serde_json::Result<WheelConfig> {
    serde_json::from_str(text)
}

pub fn builtin_wheel() -> WheelConfig {
    parse_wheel(BUILTIN_WHEEL).expect("shipped wheel.json parses")
}

/// `$HCL_CONFIG_DIR/wheel.json`, if the variable is set.
pub fn default_wheel_path() -> Option<PathBuf> {
    std::env::var_os(CONFIG_DIR_ENV).map(|d| Path::new(&d).join("wheel.json"))
}

/// Loads `path`, else the config-directory wheel, else the shipped wheel.
/// Returns the file actually read, if any.
pub fn load_wheel(path: Option<&Path>) -> anyhow::Result<(WheelConfig, Option<PathBuf>)> {
    let path = match path {
        Some(p) => Some(p.to_path_buf()),
        None => default_wheel_path().filter(|p| p.exists()),
    };
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            let cfg = parse_wheel(&text).with_context(|| format!("parsing wheel {}", p.display()))?;
            Ok((cfg, Some(p)))
        }
        None => Ok((builtin_wheel(), None)),
    }
}
