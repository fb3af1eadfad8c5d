//! Scenarios shipped with the binary.

pub const NAMES: [&str; 5] = ["fig2", "fig3", "fig4", "sweep-distortion", "vacuum"];

pub fn get(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig2" => include_str!("../presets/fig2.toml"),
        "fig3" => include_str!("../presets/fig3.toml"),
        "fig4" => include_str!("../presets/fig4.toml"),
        "sweep-distortion" => include_str!("../presets/sweep-distortion.toml"),
        "vacuum" => include_str!("../presets/vacuum.toml"),
        _ => return None,
    })
}
