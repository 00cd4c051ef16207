//! Sampled level sets of a player's objective in its own block, the
//! adjustment radius, and normal-cone membership tests.
//!
//! For player `nu` at a profile `x`, write `phi(w) = theta_nu(w, x^{-nu})`
//! for the objective as a function of the own block alone. Three sets are
//! sampled inside a bounded window:
//!
//! * weak:     `{ w : phi(w) <= phi(x^nu) }`,
//! * strict:   `{ w : phi(w) <  phi(x^nu) }`,
//! * adjusted: weak points within the adjustment radius `rho` of the
//!   strict set, where `rho = dist(x^nu, strict)`. When the strict set is
//!   empty the adjusted set falls back to the weak one.
//!
//! Each set induces a cone at `x^nu` by `{ u : <u, w - x^nu> <= 0 }` over
//! its points; [`cone_test`] checks a direction against the sampled set
//! and [`cone_direction`] searches for a maximal-margin member. Verdicts
//! are one-sided: `Refuted` carries a witness that re-evaluates against
//! the defining inequality, `Consistent` only says the budget found no
//! counterexample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::ExprError;
use crate::geometry::{dot, min_norm_point, nrm2, sub, ConvexSet, ProjectOpts};
use crate::nash::RosenGame;
use crate::sampling::{rng_for, Window};

/// Slack on the level inequalities: weak membership is `phi <= phi(x) + eps`,
/// strict membership `phi < phi(x) - eps`.
pub const LEVEL_EPS: f64 = 1e-12;

/// Default tolerance for the cone inequality `<u, w - x^nu> <= tol`.
pub const CONE_TOL: f64 = 1e-7;

/// Default sample budget per block.
pub const LEVEL_BUDGET: usize = 20_000;

const MIN_BUDGET: usize = 1_000;
const BISECT_ITERS: usize = 60;
const CUT_ROUNDS: usize = 12;
const ASCENT_ITERS: usize = 200;
const ASCENT_RESTARTS: usize = 10;

#[derive(Debug, Error)]
pub enum LevelError {
    #[error("budget {got} is below the minimum {MIN_BUDGET}")]
    BudgetTooSmall { got: usize },
    #[error("sampling window must be bounded")]
    UnboundedWindow,
    #[error("window lives in R^{got}, block {player} in R^{need}")]
    WindowDim { player: usize, got: usize, need: usize },
    #[error("direction lives in R^{got}, block {player} in R^{need}")]
    DirectionDim { player: usize, got: usize, need: usize },
    #[error("direction must be nonzero")]
    ZeroDirection,
    #[error("x^{player} is a block argmin in the window: the strict level set is empty")]
    AtArgmin { player: usize },
    #[error("the plain cone has no direction generator; use strict or adjusted")]
    PlainDirection,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelKind {
    Weak,
    Strict,
    Adjusted,
}

/// Cone selector: `Plain` is the cone of the weak level set, the other two
/// match the level kind of the same name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeKind {
    Plain,
    Strict,
    Adjusted,
}

impl ConeKind {
    pub fn level(self) -> LevelKind {
        match self {
            ConeKind::Plain => LevelKind::Weak,
            ConeKind::Strict => LevelKind::Strict,
            ConeKind::Adjusted => LevelKind::Adjusted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    Consistent,
    Refuted,
}

/// Sampling configuration shared by the operations in this module.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelParams {
    pub budget: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for LevelParams {
    fn default() -> Self {
        LevelParams { budget: LEVEL_BUDGET, tol: CONE_TOL, seed: 42 }
    }
}

/// One sampled level set: block vectors in the window that passed the
/// kind's inequality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSample {
    pub player: usize,
    pub anchor: Vec<f64>,
    pub kind: LevelKind,
    pub points: Vec<Vec<f64>>,
    pub window: Window,
    pub budget: usize,
}

impl LevelSample {
    /// Empty samples are meaningful: for the strict kind this flags that
    /// the anchor may be a block argmin within the window.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Test a direction against this sample without resampling. Used by
    /// callers that probe many directions against one cached set.
    pub fn test_direction(
        &self,
        game: &RosenGame,
        u: &[f64],
        tol: f64,
    ) -> Result<ConeVerdict, LevelError> {
        validate_direction(game, self.player, u)?;
        Ok(self.test_unchecked(game, u, tol))
    }

    fn test_unchecked(&self, game: &RosenGame, u: &[f64], tol: f64) -> ConeVerdict {
        if self.points.is_empty() {
            // nothing to separate from; for the strict kind this is the
            // whole-space cone of the argmin case
            return ConeVerdict { verdict: Consistency::Consistent, witness: None, margin: None };
        }
        let xv = game.blocks().block(&self.anchor, self.player);
        let mut best = f64::NEG_INFINITY;
        let mut best_i = 0;
        for (i, w) in self.points.iter().enumerate() {
            let m = dot(u, &sub(w, xv));
            if m > best {
                best = m;
                best_i = i;
            }
        }
        if best > tol {
            ConeVerdict {
                verdict: Consistency::Refuted,
                witness: Some(self.points[best_i].clone()),
                margin: Some(best),
            }
        } else {
            ConeVerdict { verdict: Consistency::Consistent, witness: None, margin: Some(best) }
        }
    }
}

/// Outcome of a cone membership test. `margin` is the maximum of
/// `<u, w - x^nu>` over the sample, `None` when the sample was empty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeVerdict {
    pub verdict: Consistency,
    pub witness: Option<Vec<f64>>,
    pub margin: Option<f64>,
}

/// A maximal-margin cone member, or the argmin marker that stands for the
/// whole closed unit ball case.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ConeDirection {
    AtArgmin,
    Direction { u: Vec<f64>, margin: f64, certified: bool },
}

/// Quasirandom points in the window filtered by the kind's inequality.
/// The three kinds are nested by construction: strict points pass the weak
/// filter, and the adjusted set keeps every strict point at distance zero.
pub fn sample_level_set(
    game: &RosenGame,
    nu: usize,
    x: &[f64],
    kind: LevelKind,
    window: Option<&Window>,
    params: &LevelParams,
) -> Result<LevelSample, LevelError> {
    let win = resolve_window(game, nu, window, params)?;
    let (weak, strict, theta_x) = weak_strict(game, nu, x, &win, params)?;
    let points = match kind {
        LevelKind::Weak => weak,
        LevelKind::Strict => strict,
        LevelKind::Adjusted => {
            if strict.is_empty() {
                // the adjusted set degenerates to the weak one at an argmin
                weak
            } else {
                let xv = game.blocks().block(x, nu);
                let rho = radius_certified(game, nu, x, theta_x, xv, &strict);
                weak.into_par_iter()
                    .filter(|w| within_distance(w, &strict, rho + params.tol))
                    .collect()
            }
        }
    };
    Ok(LevelSample {
        player: nu,
        anchor: x.to_vec(),
        kind,
        points,
        window: win,
        budget: params.budget,
    })
}

/// Distance from the anchor block to its strict level set, as a certified
/// upper bound: every reported value is the distance to an evaluated point
/// that satisfies the strict inequality.
///
/// The sample minimum is refined by bisection along the segment to the
/// anchor, then by a short cutting-plane loop: finite-difference gradients
/// at boundary points give supporting halfspaces of the strict set (exact
/// for differentiable quasi-convex objectives), projecting the anchor onto
/// their intersection proposes better targets to bisect toward. The cuts
/// only steer the search; correctness never rests on them.
pub fn adjustment_radius(
    game: &RosenGame,
    nu: usize,
    x: &[f64],
    window: Option<&Window>,
    params: &LevelParams,
) -> Result<f64, LevelError> {
    let win = resolve_window(game, nu, window, params)?;
    let (_, strict, theta_x) = weak_strict(game, nu, x, &win, params)?;
    if strict.is_empty() {
        return Err(LevelError::AtArgmin { player: nu });
    }
    let xv = game.blocks().block(x, nu);
    Ok(radius_certified(game, nu, x, theta_x, xv, &strict))
}

/// Test whether `u` lies in the sampled cone of the given kind at `x^nu`,
/// checking `<u, w - x^nu> <= tol` over the matching level sample.
pub fn cone_test(
    game: &RosenGame,
    nu: usize,
    x: &[f64],
    u: &[f64],
    kind: ConeKind,
    window: Option<&Window>,
    params: &LevelParams,
) -> Result<ConeVerdict, LevelError> {
    validate_direction(game, nu, u)?;
    let sample = sample_level_set(game, nu, x, kind.level(), window, params)?;
    Ok(sample.test_unchecked(game, u, params.tol))
}

/// Search for a unit direction maximizing the margin
/// `min over sample points of -<u, (w - x^nu)/|w - x^nu|>`.
///
/// When the objective has a usable gradient at the anchor, its direction
/// is the exact normal of the level boundary and is returned as soon as
/// [`cone_test`] certifies it; the sampled margin estimate is tangent
/// noise limited and cannot match that accuracy. Otherwise (plateaus,
/// kinks, jumps) the search runs projected subgradient ascent on the unit
/// sphere (200 iterations, 10 restarts, one deterministic start at the
/// negated mean direction) and, alongside it, solves the equivalent
/// min-norm-point problem over the convex hull of the sampled directions
/// exactly; the better margin wins, certified by [`cone_test`].
///
/// The strict sample decides the argmin case for both kinds: when it is
/// empty the anchor minimizes its objective within the window and the
/// caller should substitute the zero vector (ball case).
pub fn cone_direction(
    game: &RosenGame,
    nu: usize,
    x: &[f64],
    kind: ConeKind,
    window: Option<&Window>,
    params: &LevelParams,
) -> Result<ConeDirection, LevelError> {
    if kind == ConeKind::Plain {
        return Err(LevelError::PlainDirection);
    }
    let strict = sample_level_set(game, nu, x, LevelKind::Strict, window, params)?;
    if strict.is_empty() {
        return Ok(ConeDirection::AtArgmin);
    }
    let sample = if kind == ConeKind::Strict {
        strict
    } else {
        sample_level_set(game, nu, x, LevelKind::Adjusted, window, params)?
    };
    let xv = game.blocks().block(x, nu).to_vec();
    let dirs_full: Vec<Vec<f64>> =
        sample.points.iter().filter_map(|w| unit(&sub(w, &xv))).collect();
    if dirs_full.is_empty() {
        return Ok(ConeDirection::AtArgmin);
    }
    // the margin only depends on distinct directions; quantize to collapse
    // near-duplicates before the ascent, report margins on the full set
    let dirs = dedupe_directions(&dirs_full);
    let n = xv.len();
    let margin_of = |u: &[f64]| dirs.iter().map(|d| -dot(u, d)).fold(f64::INFINITY, f64::min);

    if let Some(g) = fd_grad(game, nu, x, &xv) {
        if nrm2(&g) > 1e-7 {
            if let Some(cand) = unit(&g) {
                let check = cone_test(game, nu, x, &cand, kind, window, params)?;
                if check.verdict == Consistency::Consistent {
                    let margin =
                        dirs_full.iter().map(|d| -dot(&cand, d)).fold(f64::INFINITY, f64::min);
                    return Ok(ConeDirection::Direction { u: cand, margin, certified: true });
                }
            }
        }
    }

    let e1 = std::iter::once(1.0).chain(std::iter::repeat(0.0)).take(n).collect::<Vec<_>>();
    let mut mean = vec![0.0; n];
    for d in &dirs {
        for i in 0..n {
            mean[i] -= d[i];
        }
    }
    let start = unit(&mean).unwrap_or_else(|| e1.clone());
    let mut best_u = start.clone();
    let mut best_m = margin_of(&start);
    let mut rng = rng_for(params.seed, "cone-direction");
    for restart in 0..ASCENT_RESTARTS {
        let mut u = if restart == 0 { start.clone() } else { random_unit(&mut rng, n) };
        for k in 0..ASCENT_ITERS {
            let m = margin_of(&u);
            if m > best_m {
                best_m = m;
                best_u = u.clone();
            }
            // supergradient of the min: the direction achieving it
            let worst = dirs
                .iter()
                .max_by(|a, b| dot(&u, a).partial_cmp(&dot(&u, b)).unwrap())
                .unwrap();
            let step = 0.5 / ((k + 1) as f64).sqrt();
            let moved: Vec<f64> = u.iter().zip(worst).map(|(ui, wi)| ui - step * wi).collect();
            u = unit(&moved).unwrap_or_else(|| e1.clone());
        }
        let m = margin_of(&u);
        if m > best_m {
            best_m = m;
            best_u = u;
        }
    }
    // exact candidate: max-min duality against the direction hull
    let (z, zn) = min_norm_point(&dirs, &vec![0.0; n]);
    if zn > 1e-12 {
        let cand: Vec<f64> = z.iter().map(|v| -v / zn).collect();
        if margin_of(&cand) > best_m {
            best_u = cand;
        }
    }
    let margin = dirs_full.iter().map(|d| -dot(&best_u, d)).fold(f64::INFINITY, f64::min);
    let check = cone_test(game, nu, x, &best_u, kind, window, params)?;
    Ok(ConeDirection::Direction {
        u: best_u,
        margin,
        certified: check.verdict == Consistency::Consistent,
    })
}

fn resolve_window(
    game: &RosenGame,
    nu: usize,
    window: Option<&Window>,
    params: &LevelParams,
) -> Result<Window, LevelError> {
    if params.budget < MIN_BUDGET {
        return Err(LevelError::BudgetTooSmall { got: params.budget });
    }
    let win = match window {
        Some(w) => w.clone(),
        None => game.block_window(nu),
    };
    let need = game.blocks().block_dim(nu);
    if win.dim() != need {
        return Err(LevelError::WindowDim { player: nu, got: win.dim(), need });
    }
    if !win.is_bounded() {
        return Err(LevelError::UnboundedWindow);
    }
    Ok(win)
}

fn validate_direction(game: &RosenGame, nu: usize, u: &[f64]) -> Result<(), LevelError> {
    let need = game.blocks().block_dim(nu);
    if u.len() != need {
        return Err(LevelError::DirectionDim { player: nu, got: u.len(), need });
    }
    if nrm2(u) <= 0.0 {
        return Err(LevelError::ZeroDirection);
    }
    Ok(())
}

/// Objective of player `nu` as a function of the own block, rivals frozen
/// at `x`. `None` for evaluation errors and non-finite values; such points
/// are skipped by every sampler.
fn phi(game: &RosenGame, nu: usize, x: &[f64], w: &[f64]) -> Option<f64> {
    let y = game.blocks().assemble(x, nu, w);
    game.theta(nu, &y).ok().filter(|v| v.is_finite())
}

fn weak_strict(
    game: &RosenGame,
    nu: usize,
    x: &[f64],
    win: &Window,
    params: &LevelParams,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64), LevelError> {
    let theta_x = game.theta(nu, x)?;
    let pts = win.halton_points(params.budget, params.seed);
    let vals: Vec<(Vec<f64>, f64)> = pts
        .into_par_iter()
        .filter_map(|w| phi(game, nu, x, &w).map(|v| (w, v)))
        .collect();
    let weak =
        vals.iter().filter(|(_, v)| *v <= theta_x + LEVEL_EPS).map(|(w, _)| w.clone()).collect();
    let strict =
        vals.iter().filter(|(_, v)| *v < theta_x - LEVEL_EPS).map(|(w, _)| w.clone()).collect();
    Ok((weak, strict, theta_x))
}

/// True when some point of `pts` lies within `tau` of `w`. Exits early,
/// which matters inside the quadratic adjusted-set filter.
fn within_distance(w: &[f64], pts: &[Vec<f64>], tau: f64) -> bool {
    let t2 = tau * tau;
    for p in pts {
        let mut s = 0.0;
        for (a, b) in w.iter().zip(p) {
            let d = a - b;
            s += d * d;
        }
        if s <= t2 {
            return true;
        }
    }
    false
}

fn is_strict(v: Option<f64>, theta_x: f64) -> bool {
    matches!(v, Some(t) if t < theta_x - LEVEL_EPS)
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(ai, bi)| ai + t * (bi - ai)).collect()
}

/// Bisect from `a` (not strict) toward `b` (strict); returns the strict
/// endpoint, which certifies its own distance as an upper bound.
fn toward_boundary(
    game: &RosenGame,
    nu: usize,
    x: &[f64],
    theta_x: f64,
    a: &[f64],
    b: &[f64],
) -> Vec<f64> {
    let mut lo = a.to_vec();
    let mut hi = b.to_vec();
    for _ in 0..BISECT_ITERS {
        let mid = lerp(&lo, &hi, 0.5);
        if is_strict(phi(game, nu, x, &mid), theta_x) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// First strict point along the segment from `p` toward the known strict
/// point `w`, refined by bisection toward the `p` side.
fn entering_crossing(
    game: &RosenGame,
    nu: usize,
    x: &[f64],
    theta_x: f64,
    p: &[f64],
    w: &[f64],
) -> Option<Vec<f64>> {
    let cells = 64;
    let mut prev = 0.0;
    for i in 1..=cells {
        let t = i as f64 / cells as f64;
        if is_strict(phi(game, nu, x, &lerp(p, w, t)), theta_x) {
            let (mut lo, mut hi) = (prev, t);
            for _ in 0..BISECT_ITERS {
                let mid = 0.5 * (lo + hi);
                if is_strict(phi(game, nu, x, &lerp(p, w, mid)), theta_x) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(lerp(p, w, hi));
        }
        prev = t;
    }
    None
}

fn fd_grad(game: &RosenGame, nu: usize, x: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let mut g = vec![0.0; b.len()];
    for i in 0..b.len() {
        let h = 1e-6 * (1.0 + b[i].abs());
        let mut yp = b.to_vec();
        let mut ym = b.to_vec();
        yp[i] += h;
        ym[i] -= h;
        g[i] = (phi(game, nu, x, &yp)? - phi(game, nu, x, &ym)?) / (2.0 * h);
    }
    Some(g)
}

fn radius_certified(
    game: &RosenGame,
    nu: usize,
    x: &[f64],
    theta_x: f64,
    xv: &[f64],
    strict: &[Vec<f64>],
) -> f64 {
    let w0 = strict
        .iter()
        .min_by(|a, b| nrm2(&sub(a, xv)).partial_cmp(&nrm2(&sub(b, xv))).unwrap())
        .unwrap();
    let mut best_pt = toward_boundary(game, nu, x, theta_x, xv, w0);
    let mut best = nrm2(&sub(&best_pt, xv));
    let mut normals: Vec<Vec<f64>> = Vec::new();
    let mut offsets: Vec<f64> = Vec::new();
    let popts = ProjectOpts::default();
    let mut stall = 0;
    for _ in 0..CUT_ROUNDS {
        if let Some(g) = fd_grad(game, nu, x, &best_pt) {
            let gn = nrm2(&g);
            if gn > 1e-10 {
                let ghat: Vec<f64> = g.iter().map(|v| v / gn).collect();
                let c = dot(&ghat, &best_pt);
                normals.push(ghat);
                offsets.push(c);
            }
        }
        if normals.is_empty() {
            break;
        }
        let relax = match ConvexSet::polyhedron(normals.clone(), offsets.clone()) {
            Ok(s) => s,
            Err(_) => break,
        };
        let p = match relax.project(xv, &popts) {
            Ok(p) => p,
            Err(_) => break,
        };
        if nrm2(&sub(&p, xv)) >= best - 1e-12 {
            // the outer relaxation cannot beat the certified bound
            break;
        }
        let q = if is_strict(phi(game, nu, x, &p), theta_x) {
            Some(p)
        } else {
            entering_crossing(game, nu, x, theta_x, &p, &best_pt)
        };
        let mut improved = false;
        if let Some(q) = q {
            let cand = toward_boundary(game, nu, x, theta_x, xv, &q);
            let d = nrm2(&sub(&cand, xv));
            if d < best - 1e-12 {
                best = d;
                best_pt = cand;
                improved = true;
            }
        }
        if improved {
            stall = 0;
        } else {
            stall += 1;
            if stall >= 2 {
                break;
            }
        }
    }
    best
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = nrm2(v);
    if n < 1e-12 {
        None
    } else {
        Some(v.iter().map(|x| x / n).collect())
    }
}

fn dedupe_directions(dirs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for d in dirs {
        let key: Vec<i64> = d.iter().map(|v| (v * 1e4).round() as i64).collect();
        if seen.insert(key) {
            out.push(d.clone());
        }
    }
    out
}

fn random_unit(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Some(u) = unit(&v) {
            return u;
        }
    }
}
