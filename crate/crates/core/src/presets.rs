//! Built-in scenarios.

use crate::config::ScenarioConfig;
use crate::{Error, Result};

const PRESETS: [(&str, &str); 5] = [
    ("aizenman-bak-frag", include_str!("../presets/aizenman-bak-frag.toml")),
    ("constant-coag", include_str!("../presets/constant-coag.toml")),
    ("gfc-global-ii", include_str!("../presets/gfc-global-ii.toml")),
    ("gfc-global-i", include_str!("../presets/gfc-global-i.toml")),
    ("regularization-probe", include_str!("../presets/regularization-probe.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let src = preset_source(name).ok_or_else(|| {
        Error::Config(format!("unknown preset {name:?}; known: {}", preset_names().join(", ")))
    })?;
    ScenarioConfig::from_toml_str(src)
}

/// One line per preset: name and description.
pub fn list_presets() -> String {
    let mut out = String::new();
    for name in preset_names() {
        let desc = preset(name).ok().and_then(|c| c.description).unwrap_or_default();
        out.push_str(&format!("{name:<22} {desc}\n"));
    }
    out
}
