//! Convex set primitives, projections and strategy slices.
//!
//! The shared constraint set of a game is a [`ConvexSet`]. Freezing every
//! block but `nu` yields the player's feasible slice, represented by
//! [`SliceSet`]; the blockwise product of slices is the rectangle `X(x)`
//! whose minimum-norm element [`block_rectangle_min_norm`] computes.
//!
//! Projections are exact where a closed form exists (boxes, balls,
//! halfspaces), finite for hulls (minimum-norm point over the shifted
//! vertices) and iterative elsewhere (cyclic Dykstra over halfspaces or
//! members, supporting-hyperplane cuts for sublevel sets). Iterative paths
//! honor [`ProjectOpts`] and report [`GeometryError::NonConvergence`] with
//! the best iterate instead of silently returning garbage.

mod project;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::BlockStructure;
use crate::expr::{ExprError, ObjectiveExpr};
use crate::sampling::Window;

pub use project::ProjectOpts;
pub(crate) use project::{golden_min, min_norm_point};

/// Default membership tolerance.
pub const MEMBER_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: point has length {got}, set lives in R^{need}")]
    Dim { got: usize, need: usize },
    #[error("invalid set: {0}")]
    Invalid(String),
    #[error("empty slice for player {player}")]
    EmptySlice { player: usize },
    #[error("projection did not converge: residual {residual:.3e} after {iters} iterations")]
    NonConvergence { residual: f64, iters: usize, best: Vec<f64> },
    #[error("midpoint convexity check failed between {a:?} and {b:?}")]
    NotConvex { a: Vec<f64>, b: Vec<f64> },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    L2,
    Linf,
}

impl NormKind {
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            NormKind::L1 => v.iter().map(|t| t.abs()).sum(),
            NormKind::L2 => v.iter().map(|t| t * t).sum::<f64>().sqrt(),
            NormKind::Linf => v.iter().fold(0.0, |m, t| m.max(t.abs())),
        }
    }
}

/// Closed convex subset of R^n.
///
/// `Sublevel` carries a user assertion of quasi-convexity of `g`; the
/// toolkit trusts the structural variants and can spot-check a sublevel
/// set with [`spot_check_convexity`] at load time.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Rows `a[i] . x <= b[i]`.
    Polyhedron { a: Vec<Vec<f64>>, b: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64, norm: NormKind },
    /// Convex hull of finitely many points.
    Hull { points: Vec<Vec<f64>> },
    /// `{ x : g(x) <= c }` with a strict interior point for cut generation.
    Sublevel { g: ObjectiveExpr, c: f64, interior: Vec<f64> },
    Intersection { members: Vec<ConvexSet> },
}

impl ConvexSet {
    pub fn bbox(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeometryError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(GeometryError::Invalid("box bounds must have equal nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b || a.is_nan() || b.is_nan()) {
            return Err(GeometryError::Invalid("box needs lo <= hi".into()));
        }
        Ok(ConvexSet::Box { lo, hi })
    }

    pub fn polyhedron(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self, GeometryError> {
        if a.is_empty() || a.len() != b.len() {
            return Err(GeometryError::Invalid("polyhedron needs matching rows of A and b".into()));
        }
        let n = a[0].len();
        if n == 0 || a.iter().any(|row| row.len() != n) {
            return Err(GeometryError::Invalid("polyhedron rows must share a dimension".into()));
        }
        if a.iter().flatten().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::Invalid("polyhedron coefficients must be finite".into()));
        }
        Ok(ConvexSet::Polyhedron { a, b })
    }

    pub fn ball(center: Vec<f64>, radius: f64, norm: NormKind) -> Result<Self, GeometryError> {
        if center.is_empty() || !radius.is_finite() || radius <= 0.0 {
            return Err(GeometryError::Invalid("ball needs a positive finite radius".into()));
        }
        Ok(ConvexSet::Ball { center, radius, norm })
    }

    pub fn hull(points: Vec<Vec<f64>>) -> Result<Self, GeometryError> {
        if points.is_empty() || points[0].is_empty() {
            return Err(GeometryError::Invalid("hull needs at least one point".into()));
        }
        let n = points[0].len();
        if points.iter().any(|p| p.len() != n) || points.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(GeometryError::Invalid("hull points must share a finite dimension".into()));
        }
        Ok(ConvexSet::Hull { points })
    }

    /// The interior point must satisfy `g(interior) < c - 1e-9`.
    pub fn sublevel(g: ObjectiveExpr, c: f64, interior: Vec<f64>) -> Result<Self, GeometryError> {
        if interior.len() != g.dim() {
            return Err(GeometryError::Dim { got: interior.len(), need: g.dim() });
        }
        let gi = g.eval(&interior)?;
        if !(gi < c - 1e-9) {
            return Err(GeometryError::Invalid(format!(
                "interior point is not strictly inside: g = {gi}, level = {c}"
            )));
        }
        Ok(ConvexSet::Sublevel { g, c, interior })
    }

    /// Nested intersections are flattened.
    pub fn intersection(members: Vec<ConvexSet>) -> Result<Self, GeometryError> {
        if members.is_empty() {
            return Err(GeometryError::Invalid("intersection needs at least one member".into()));
        }
        let n = members[0].dim();
        if members.iter().any(|m| m.dim() != n) {
            return Err(GeometryError::Invalid("intersection members must share a dimension".into()));
        }
        let mut flat = Vec::new();
        for m in members {
            match m {
                ConvexSet::Intersection { members } => flat.extend(members),
                other => flat.push(other),
            }
        }
        Ok(ConvexSet::Intersection { members: flat })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Polyhedron { a, .. } => a[0].len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Hull { points } => points[0].len(),
            ConvexSet::Sublevel { g, .. } => g.dim(),
            ConvexSet::Intersection { members } => members[0].dim(),
        }
    }

    /// Membership within `tol`. Evaluation failures of a sublevel function
    /// count as "outside" (open-set boundaries behave like excluded points).
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            ConvexSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *v >= a - tol && *v <= b + tol),
            ConvexSet::Polyhedron { a, b } => a.iter().zip(b).all(|(row, bi)| {
                let scale = 1.0_f64.max(NormKind::L2.eval(row));
                dot(row, x) - bi <= tol * scale
            }),
            ConvexSet::Ball { center, radius, norm } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(u, v)| u - v).collect();
                norm.eval(&d) <= radius + tol
            }
            ConvexSet::Hull { points } => {
                let scale = 1.0 + NormKind::L2.eval(x);
                project::hull_distance(points, x) <= tol * scale + 1e-12
            }
            ConvexSet::Sublevel { g, c, .. } => match g.eval(x) {
                Ok(v) => v <= c + tol,
                Err(_) => false,
            },
            ConvexSet::Intersection { members } => members.iter().all(|m| m.contains(x, tol)),
        }
    }

    /// Euclidean projection of `x` onto the set.
    pub fn project(&self, x: &[f64], opts: &ProjectOpts) -> Result<Vec<f64>, GeometryError> {
        if x.len() != self.dim() {
            return Err(GeometryError::Dim { got: x.len(), need: self.dim() });
        }
        project::project(self, x, opts)
    }

    pub fn distance(&self, x: &[f64], opts: &ProjectOpts) -> Result<f64, GeometryError> {
        let p = self.project(x, opts)?;
        Ok(nrm2(&sub(x, &p)))
    }

    /// The strategy slice of player `nu` at the rivals frozen from `x`.
    pub fn slice(&self, blocks: &BlockStructure, nu: usize, x: &[f64]) -> SliceSet {
        SliceSet {
            parent: self.clone(),
            blocks: blocks.clone(),
            nu,
            anchor: x.to_vec(),
        }
    }
}

/// Feasible set of one player at frozen rivals:
/// `X_nu(x^{-nu}) = { y : (y, x^{-nu}) in X }`, living in the block space.
#[derive(Debug, Clone)]
pub struct SliceSet {
    parent: ConvexSet,
    blocks: BlockStructure,
    nu: usize,
    /// Full profile supplying the frozen rival coordinates; the block-`nu`
    /// entries of the anchor are irrelevant to the slice itself.
    anchor: Vec<f64>,
}

impl SliceSet {
    pub fn player(&self) -> usize {
        self.nu
    }

    pub fn block_dim(&self) -> usize {
        self.blocks.block_dim(self.nu)
    }

    pub fn assemble(&self, y: &[f64]) -> Vec<f64> {
        self.blocks.assemble(&self.anchor, self.nu, y)
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.parent.contains(&self.assemble(y), tol)
    }

    /// Euclidean projection inside the block space.
    pub fn project(&self, y: &[f64], opts: &ProjectOpts) -> Result<Vec<f64>, GeometryError> {
        project::project_slice(self, y, opts)
    }

    pub fn distance(&self, y: &[f64], opts: &ProjectOpts) -> Result<f64, GeometryError> {
        let p = self.project(y, opts)?;
        Ok(nrm2(&sub(y, &p)))
    }

    /// Exact interval bounds for one-dimensional slices of box/polyhedral/
    /// ball parents; `None` when no closed form is available.
    pub fn interval(&self) -> Option<Result<(f64, f64), GeometryError>> {
        if self.block_dim() != 1 {
            return None;
        }
        project::slice_interval(self)
    }

    pub(crate) fn parts(&self) -> (&ConvexSet, &BlockStructure, usize, &[f64]) {
        (&self.parent, &self.blocks, self.nu, &self.anchor)
    }
}

/// Minimum-norm element of the block rectangle
/// `X(x) = prod_nu X_nu(x^{-nu})`, assembled as a full profile, with its
/// Euclidean norm. Requires `x in X` so that no slice is empty.
pub fn block_rectangle_min_norm(
    set: &ConvexSet,
    blocks: &BlockStructure,
    x: &[f64],
    opts: &ProjectOpts,
) -> Result<(Vec<f64>, f64), GeometryError> {
    let mut out = vec![0.0; blocks.dim()];
    for nu in 0..blocks.players() {
        let slice = set.slice(blocks, nu, x);
        let zero = vec![0.0; blocks.block_dim(nu)];
        let m = slice.project(&zero, opts)?;
        out[blocks.range(nu)].copy_from_slice(&m);
    }
    let norm = nrm2(&out);
    Ok((out, norm))
}

/// Decide membership of `y` in the cross set
/// `S(x) = union_nu X_nu(x^{-nu}) x {x^{-nu}}`: some player can reach `y`
/// from `x` by a unilateral feasible move. Returns the smallest such player.
pub fn cross_membership(
    set: &ConvexSet,
    blocks: &BlockStructure,
    x_hat: &[f64],
    y: &[f64],
    tol: f64,
) -> Option<usize> {
    for nu in 0..blocks.players() {
        if blocks.rivals_match(y, x_hat, nu, tol) && set.contains(y, tol) {
            return Some(nu);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum LscVerdict {
    /// Distances from `z0` to the moving slice decay along the path; no
    /// lower-semicontinuity failure was observed.
    ConsistentWithLsc { distances: Vec<f64> },
    /// The distance stays above `delta` all the way to the limit: `z0` is
    /// unreachable from nearby rival vectors, certifying a failure of
    /// lower semicontinuity along this path.
    LscRefuted { distances: Vec<f64>, delta: f64, witness_gap: f64 },
}

/// Probe lower semicontinuity of `x^{-nu} -> X_nu(x^{-nu})` at `x0_minus`
/// along a path of rival vectors converging to it.
///
/// `z0` must lie in the limit slice and the path must end within
/// `path_tol` of `x0_minus`; both are validated.
pub fn lsc_probe(
    set: &ConvexSet,
    blocks: &BlockStructure,
    nu: usize,
    x0_minus: &[f64],
    z0: &[f64],
    path: &[Vec<f64>],
    path_tol: f64,
    opts: &ProjectOpts,
) -> Result<LscVerdict, GeometryError> {
    let profile0 = profile_from_rivals(blocks, nu, z0, x0_minus);
    if !set.contains(&profile0, 1e-7) {
        return Err(GeometryError::Invalid(
            "z0 does not belong to the slice at x0_minus".into(),
        ));
    }
    if path.is_empty() {
        return Err(GeometryError::Invalid("path must be nonempty".into()));
    }
    let last_gap = nrm2(&sub(path.last().unwrap(), x0_minus));
    if last_gap > path_tol {
        return Err(GeometryError::Invalid(format!(
            "path does not converge to x0_minus: last gap {last_gap:.3e} > {path_tol:.3e}"
        )));
    }

    let mut distances = Vec::with_capacity(path.len());
    for rivals in path {
        let profile = profile_from_rivals(blocks, nu, z0, rivals);
        let slice = set.slice(blocks, nu, &profile);
        let d = match slice.project(z0, opts) {
            Ok(p) => {
                if slice.contains(&p, 1e-6) {
                    nrm2(&sub(z0, &p))
                } else {
                    f64::INFINITY // projection failed to reach the slice
                }
            }
            Err(GeometryError::EmptySlice { .. }) => f64::INFINITY,
            Err(GeometryError::NonConvergence { best, .. }) => {
                if slice.contains(&best, 1e-6) {
                    nrm2(&sub(z0, &best))
                } else {
                    f64::INFINITY
                }
            }
            Err(e) => return Err(e),
        };
        distances.push(d);
    }

    let tail = distances.len().min(5);
    let delta = (0.5 * distances[0]).max(1e-6);
    let refuted = distances[distances.len() - tail..].iter().all(|d| *d >= delta);
    if refuted {
        let witness_gap = distances[distances.len() - 1];
        Ok(LscVerdict::LscRefuted { distances, delta, witness_gap })
    } else {
        Ok(LscVerdict::ConsistentWithLsc { distances })
    }
}

/// Full profile with block `nu` set to `block` and the remaining
/// coordinates filled from `rivals` in flat order.
pub fn profile_from_rivals(
    blocks: &BlockStructure,
    nu: usize,
    block: &[f64],
    rivals: &[f64],
) -> Vec<f64> {
    let r = blocks.range(nu);
    assert_eq!(block.len(), r.len());
    assert_eq!(rivals.len(), blocks.dim() - r.len());
    let mut out = Vec::with_capacity(blocks.dim());
    let mut it = rivals.iter();
    for i in 0..blocks.dim() {
        if r.contains(&i) {
            out.push(block[i - r.start]);
        } else {
            out.push(*it.next().unwrap());
        }
    }
    out
}

/// Midpoint convexity spot check over a sampling window, used to validate
/// user-asserted sublevel sets at load time.
pub fn spot_check_convexity(
    set: &ConvexSet,
    window: &Window,
    pairs: usize,
    seed: u64,
) -> Result<(), GeometryError> {
    let mut members = Vec::new();
    let budget = pairs * 20;
    for p in window.halton_points(budget, seed ^ 0x5b0f) {
        if set.contains(&p, MEMBER_TOL) {
            members.push(p);
            if members.len() >= 2 * pairs {
                break;
            }
        }
    }
    for k in 0..(members.len() / 2) {
        let a = &members[2 * k];
        let b = &members[2 * k + 1];
        let mid: Vec<f64> = a.iter().zip(b).map(|(u, v)| 0.5 * (u + v)).collect();
        // Membership used a tight tolerance; allow a looser one for the
        // midpoint so boundary roundoff does not produce false alarms.
        if !set.contains(&mid, 1e-7) {
            return Err(GeometryError::NotConvex { a: a.clone(), b: b.clone() });
        }
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

pub(crate) fn nrm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| u - v).collect()
}

#[cfg(test)]
mod tests;
