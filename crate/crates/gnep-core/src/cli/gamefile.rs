//! The TOML game-file schema and its translation into a runtime game.
//!
//! A file has four required sections and an optional fifth:
//!
//! ```toml
//! [game]          # players, dims, optional norm (l1 | l2 | linf)
//! [objective.1]   # expr, one table per player, keys 1..players
//! [set]           # type plus the fields of that type
//! [windows]       # lo, hi over the full profile, finite
//! [meta]          # labels, paper_discrepancy, both optional
//! ```
//!
//! Set types and their fields: `box` (lo, hi), `polyhedron` (a, b, rows
//! of `a x <= b`), `ball` (center, radius, norm), `hull` (points),
//! `sublevel` (g, c, interior), `intersection` (members, an array of
//! nested set tables). Box bounds may be TOML `inf` / `-inf`; windows
//! must stay finite. The top-level set may assert `equals_product = true`
//! when it is a product of per-player blocks, which gates the analyses
//! that are only sound on product sets.
//!
//! Parsing and building are split so a file can be round-tripped
//! unchanged: [`GameFile::parse`] keeps the document structure,
//! [`GameFile::build`] validates it and produces the game.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::blocks::BlockStructure;
use crate::expr::parse;
use crate::geometry::{spot_check_convexity, ConvexSet, GeometryError, NormKind};
use crate::nash::RosenGame;
use crate::sampling::Window;

/// Midpoint pairs spent validating a user-asserted sublevel set at load
/// time.
const CONVEXITY_PAIRS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub game: GameSection,
    pub objective: BTreeMap<String, ObjectiveSection>,
    pub set: SetSection,
    pub windows: WindowsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<MetaSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub players: usize,
    pub dims: Vec<usize>,
    /// Norm of the two-player reduction's distance map; `l2` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub expr: String,
}

/// One set table. `type` picks the shape; which other fields are required
/// is checked in the builder, stray keys are rejected by serde, and
/// fields of a different shape are rejected explicitly so a confused
/// file fails loudly instead of half-working.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSection {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equals_product: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<SetSection>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowsSection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paper_discrepancy: Option<String>,
}

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

impl GameFile {
    /// Parse a TOML document. Errors carry the line and column of the
    /// offending key.
    pub fn parse(text: &str) -> Result<GameFile, CliError> {
        toml::from_str(text).map_err(|e| usage(format!("game file: {e}")))
    }

    /// Serialize back to TOML. Parsing the output reproduces this value.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("game files serialize")
    }

    /// Reduction distance norm, `l2` unless the file says otherwise.
    pub fn norm(&self) -> NormKind {
        self.game.norm.unwrap_or(NormKind::L2)
    }

    /// Reproduction warning embedded in the file, if any.
    pub fn discrepancy(&self) -> Option<&str> {
        self.meta.as_ref()?.paper_discrepancy.as_deref()
    }

    /// Validate every section and construct the game.
    pub fn build(&self) -> Result<RosenGame, CliError> {
        let players = self.game.players;
        if players == 0 || players > 8 {
            return Err(usage(format!("[game]: players must be 1..=8, got {players}")));
        }
        if self.game.dims.len() != players {
            return Err(usage(format!(
                "[game]: dims lists {} blocks for {players} players",
                self.game.dims.len()
            )));
        }
        if self.game.dims.iter().any(|d| *d == 0) {
            return Err(usage("[game]: every block dimension must be positive".into()));
        }
        let n: usize = self.game.dims.iter().sum();

        let mut objectives = Vec::with_capacity(players);
        for k in 1..=players {
            let sec = self
                .objective
                .get(&k.to_string())
                .ok_or_else(|| usage(format!("[objective.{k}]: missing")))?;
            let e = parse(&sec.expr, n).map_err(|e| usage(format!("[objective.{k}]: {e}")))?;
            objectives.push(e);
        }
        if self.objective.len() != players {
            let stray = self
                .objective
                .keys()
                .find(|k| k.parse::<usize>().map_or(true, |v| v < 1 || v > players))
                .cloned()
                .unwrap_or_default();
            return Err(usage(format!(
                "[objective.{stray}]: no player with that index ({players} players)"
            )));
        }

        let set = build_set(&self.set, n, true)?;
        if set.dim() != n {
            return Err(usage(format!(
                "[set]: describes R^{}, but dims sum to {n}",
                set.dim()
            )));
        }

        let w = &self.windows;
        if w.lo.len() != n || w.hi.len() != n {
            return Err(usage(format!("[windows]: lo and hi must have length {n}")));
        }
        if w.lo.iter().chain(&w.hi).any(|v| !v.is_finite()) {
            return Err(usage("[windows]: bounds must be finite".into()));
        }
        if w.lo.iter().zip(&w.hi).any(|(a, b)| a > b) {
            return Err(usage("[windows]: lo exceeds hi".into()));
        }
        let window = Window::new(w.lo.clone(), w.hi.clone());

        let labels = match self.meta.as_ref().and_then(|m| m.labels.as_ref()) {
            Some(l) if l.len() != players => {
                return Err(usage(format!(
                    "[meta]: {} labels for {players} players",
                    l.len()
                )));
            }
            Some(l) => Some(l.clone()),
            None => None,
        };

        let game = RosenGame::new(
            BlockStructure::new(self.game.dims.clone()),
            set,
            objectives,
            window,
            labels,
        )
        .map_err(|e| usage(format!("game file: {e}")))?
        .with_product_assertion(self.set.equals_product.unwrap_or(false));

        // user-asserted convexity gets a midpoint spot check at load time
        if has_sublevel(&self.set) {
            spot_check_convexity(game.set(), game.window(), CONVEXITY_PAIRS, 42)
                .map_err(|e| usage(format!("[set]: {e}")))?;
        }
        Ok(game)
    }
}

fn has_sublevel(sec: &SetSection) -> bool {
    sec.kind == "sublevel"
        || sec
            .members
            .as_ref()
            .is_some_and(|ms| ms.iter().any(has_sublevel))
}

fn req<'a, T>(field: &'a Option<T>, ctx: &str, kind: &str, name: &str) -> Result<&'a T, CliError> {
    field
        .as_ref()
        .ok_or_else(|| usage(format!("{ctx}: type {kind:?} needs {name}")))
}

fn build_set(sec: &SetSection, n: usize, top: bool) -> Result<ConvexSet, CliError> {
    let ctx = if top { "[set]" } else { "[[set.members]]" };
    if !top && sec.equals_product.is_some() {
        return Err(usage(format!(
            "{ctx}: equals_product belongs on the top-level set"
        )));
    }
    let kind = sec.kind.as_str();
    let allowed: &[&str] = match kind {
        "box" => &["lo", "hi"],
        "polyhedron" => &["a", "b"],
        "ball" => &["center", "radius", "norm"],
        "hull" => &["points"],
        "sublevel" => &["g", "c", "interior"],
        "intersection" => &["members"],
        other => {
            return Err(usage(format!(
                "{ctx}: unknown set type {other:?}; expected box, polyhedron, ball, \
                 hull, sublevel, or intersection"
            )));
        }
    };
    let present = [
        ("lo", sec.lo.is_some()),
        ("hi", sec.hi.is_some()),
        ("a", sec.a.is_some()),
        ("b", sec.b.is_some()),
        ("center", sec.center.is_some()),
        ("radius", sec.radius.is_some()),
        ("norm", sec.norm.is_some()),
        ("points", sec.points.is_some()),
        ("g", sec.g.is_some()),
        ("c", sec.c.is_some()),
        ("interior", sec.interior.is_some()),
        ("members", sec.members.is_some()),
    ];
    for (name, is_set) in present {
        if is_set && !allowed.contains(&name) {
            return Err(usage(format!(
                "{ctx}: field {name:?} does not apply to type {kind:?}"
            )));
        }
    }
    let geo = |e: GeometryError| usage(format!("{ctx}: {e}"));

    match kind {
        "box" => {
            let lo = req(&sec.lo, ctx, kind, "lo")?.clone();
            let hi = req(&sec.hi, ctx, kind, "hi")?.clone();
            ConvexSet::bbox(lo, hi).map_err(geo)
        }
        "polyhedron" => {
            let a = req(&sec.a, ctx, kind, "a")?.clone();
            let b = req(&sec.b, ctx, kind, "b")?.clone();
            ConvexSet::polyhedron(a, b).map_err(geo)
        }
        "ball" => {
            let center = req(&sec.center, ctx, kind, "center")?.clone();
            let radius = *req(&sec.radius, ctx, kind, "radius")?;
            ConvexSet::ball(center, radius, sec.norm.unwrap_or(NormKind::L2)).map_err(geo)
        }
        "hull" => {
            let points = req(&sec.points, ctx, kind, "points")?.clone();
            ConvexSet::hull(points).map_err(geo)
        }
        "sublevel" => {
            let g_text = req(&sec.g, ctx, kind, "g")?;
            let c = *req(&sec.c, ctx, kind, "c")?;
            let interior = req(&sec.interior, ctx, kind, "interior")?.clone();
            let g = parse(g_text, n).map_err(|e| usage(format!("{ctx}: g: {e}")))?;
            ConvexSet::sublevel(g, c, interior).map_err(geo)
        }
        "intersection" => {
            let members = req(&sec.members, ctx, kind, "members")?;
            let built = members
                .iter()
                .map(|m| build_set(m, n, false))
                .collect::<Result<Vec<_>, _>>()?;
            ConvexSet::intersection(built).map_err(geo)
        }
        _ => unreachable!("kind screened above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [game]
        players = 2
        dims = [1, 1]

        [objective.1]
        expr = "(x1 - 2)^2"

        [objective.2]
        expr = "(x2 - 2)^2"

        [set]
        type = "polyhedron"
        a = [[-1.0, 0.0], [0.0, -1.0], [2.0, 1.0]]
        b = [0.0, 0.0, 1.0]

        [windows]
        lo = [0.0, 0.0]
        hi = [1.0, 1.0]
    "#;

    #[test]
    fn minimal_file_builds() {
        let gf = GameFile::parse(MINIMAL).unwrap();
        let game = gf.build().unwrap();
        assert_eq!(game.players(), 2);
        assert_eq!(game.dim(), 2);
        assert_eq!(gf.norm(), NormKind::L2);
        assert!(!game.equals_product());
    }

    #[test]
    fn serialization_round_trips_the_document() {
        let gf = GameFile::parse(MINIMAL).unwrap();
        let again = GameFile::parse(&gf.to_toml()).unwrap();
        assert_eq!(gf, again);
    }

    #[test]
    fn infinities_survive_the_round_trip() {
        let text = r#"
            [game]
            players = 1
            dims = [2]

            [objective.1]
            expr = "x1^2 + x2^2"

            [set]
            type = "box"
            lo = [1e-9, -inf]
            hi = [inf, inf]

            [windows]
            lo = [0.0, 0.0]
            hi = [6.0, 6.0]
        "#;
        let gf = GameFile::parse(text).unwrap();
        assert_eq!(gf.set.hi.as_ref().unwrap()[0], f64::INFINITY);
        let again = GameFile::parse(&gf.to_toml()).unwrap();
        assert_eq!(gf, again);
        again.build().unwrap();
    }

    fn expect_usage(text: &str, needle: &str) {
        let err = match GameFile::parse(text) {
            Err(e) => e,
            Ok(gf) => gf.build().expect_err("build should fail"),
        };
        let CliError::Usage(msg) = err else {
            panic!("expected a usage error");
        };
        assert!(msg.contains(needle), "{msg:?} lacks {needle:?}");
    }

    #[test]
    fn dims_must_match_players() {
        let text = MINIMAL.replace("dims = [1, 1]", "dims = [2]");
        expect_usage(&text, "[game]");
    }

    #[test]
    fn objective_keys_must_cover_the_players() {
        let text = MINIMAL.replace("[objective.2]", "[objective.3]");
        expect_usage(&text, "missing");
    }

    #[test]
    fn variable_indices_are_checked_against_the_dimension() {
        let text = MINIMAL.replace("(x2 - 2)^2", "(x7 - 2)^2");
        expect_usage(&text, "[objective.2]");
    }

    #[test]
    fn set_dimension_must_match_the_blocks() {
        let text = MINIMAL
            .replace("a = [[-1.0, 0.0], [0.0, -1.0], [2.0, 1.0]]", "a = [[-1.0]]")
            .replace("b = [0.0, 0.0, 1.0]", "b = [0.0]");
        expect_usage(&text, "[set]");
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_position() {
        let text = MINIMAL.replace("b = [0.0, 0.0, 1.0]", "b = [0.0, 0.0, 1.0]\nradius = 2.0");
        expect_usage(&text, "radius");
    }

    #[test]
    fn foreign_fields_for_the_type_are_rejected() {
        let text = r#"
            [game]
            players = 1
            dims = [1]

            [objective.1]
            expr = "x1^2"

            [set]
            type = "box"
            lo = [-1.0]
            hi = [1.0]
            points = [[0.0]]

            [windows]
            lo = [-1.0]
            hi = [1.0]
        "#;
        expect_usage(text, "points");
    }

    #[test]
    fn equals_product_is_top_level_only() {
        let text = r#"
            [game]
            players = 1
            dims = [1]

            [objective.1]
            expr = "x1^2"

            [set]
            type = "intersection"

            [[set.members]]
            type = "box"
            lo = [-1.0]
            hi = [1.0]
            equals_product = true

            [windows]
            lo = [-1.0]
            hi = [1.0]
        "#;
        expect_usage(text, "equals_product");
    }

    #[test]
    fn windows_must_be_finite() {
        let text = MINIMAL.replace("hi = [1.0, 1.0]", "hi = [1.0, inf]");
        expect_usage(&text, "[windows]");
    }

    #[test]
    fn labels_are_counted() {
        let text = format!("{MINIMAL}\n[meta]\nlabels = [\"only one\"]\n");
        expect_usage(&text, "[meta]");
    }

    #[test]
    fn parse_errors_carry_line_positions() {
        let err = GameFile::parse("[game]\nplayers = \"two\"\n").unwrap_err();
        let CliError::Usage(msg) = err else {
            panic!("expected a usage error");
        };
        assert!(msg.contains("line 2"), "{msg:?}");
    }

    #[test]
    fn nonconvex_sublevel_sets_are_caught_at_load() {
        let text = r#"
            [game]
            players = 1
            dims = [2]

            [objective.1]
            expr = "x1 + x2"

            [set]
            type = "sublevel"
            g = "-(x1^2 + x2^2)"
            c = -1.0
            interior = [2.0, 2.0]

            [windows]
            lo = [-3.0, -3.0]
            hi = [3.0, 3.0]
        "#;
        expect_usage(text, "[set]");
    }
}
