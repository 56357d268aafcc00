//! Built-in experiment presets, stored as ordinary config files.

pub const NAMES: &[&str] = &[
    "burnin-light",
    "burnin-heavy",
    "mislocated",
    "robust-center",
    "robust-radius",
    "pathological",
    "large-n",
    "scaling-curves",
];

/// TOML text of a built-in preset.
pub fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "burnin-light" => include_str!("../presets/burnin-light.toml"),
        "burnin-heavy" => include_str!("../presets/burnin-heavy.toml"),
        "mislocated" => include_str!("../presets/mislocated.toml"),
        "robust-center" => include_str!("../presets/robust-center.toml"),
        "robust-radius" => include_str!("../presets/robust-radius.toml"),
        "pathological" => include_str!("../presets/pathological.toml"),
        "large-n" => include_str!("../presets/large-n.toml"),
        "scaling-curves" => include_str!("../presets/scaling-curves.toml"),
        _ => return None,
    })
}
