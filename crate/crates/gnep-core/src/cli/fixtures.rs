//! Bundled example games, compiled into the binary.

/// Fixture names in listing order.
pub const NAMES: [&str; 8] = [
    "aad2014",
    "cavazzuti",
    "diamond",
    "step",
    "qc-l1",
    "hull3d",
    "hyperbola",
    "wedge",
];

/// TOML source of a bundled fixture.
pub fn lookup(name: &str) -> Option<&'static str> {
    match name {
        "aad2014" => Some(include_str!("fixtures/aad2014.toml")),
        "cavazzuti" => Some(include_str!("fixtures/cavazzuti.toml")),
        "diamond" => Some(include_str!("fixtures/diamond.toml")),
        "step" => Some(include_str!("fixtures/step.toml")),
        "qc-l1" => Some(include_str!("fixtures/qc-l1.toml")),
        "hull3d" => Some(include_str!("fixtures/hull3d.toml")),
        "hyperbola" => Some(include_str!("fixtures/hyperbola.toml")),
        "wedge" => Some(include_str!("fixtures/wedge.toml")),
        _ => None,
    }
}
