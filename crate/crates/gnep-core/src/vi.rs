//! Variational inequality layer over a game: the stacked gradient map,
//! cone-valued maps with a max-margin selection, the extragradient solver
//! for the Stampacchia problem, and sampled Minty testers, both over the
//! shared set and over the cross set with plain, strict or adjusted cones.
//!
//! The testers are refutation oriented. A Refuted verdict carries a
//! re-evaluated witness; a Consistent verdict only says the sampled search
//! found no violation and is never claimed as proof.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::ExprError;
use crate::geometry::{dot, nrm2, sub, ConvexSet, GeometryError, ProjectOpts};
use crate::levelsets::{
    cone_direction, sample_level_set, ConeDirection, ConeKind, LevelError, LevelParams,
    LevelSample, LEVEL_EPS,
};
use crate::nash::{best_response_at, BrParams, GameError, RosenGame};
use crate::sampling::{rng_for, Window};

/// Step size floor for the extragradient halving schedule.
const GAMMA_FLOOR: f64 = 1e-12;
/// Sampled block deviations per player in the quasi-variational tester.
const QVI_Z_POINTS: usize = 24;
/// Direction candidates per sampled deviation.
const QVI_DIRECTIONS: usize = 50;
/// Membership slack for anchors that are required to lie in the set.
const ANCHOR_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ViError {
    #[error("profile has dimension {got}, the game needs {need}")]
    ProfileDim { got: usize, need: usize },
    #[error("profile has a non-finite coordinate")]
    BadProfile,
    #[error("step size must be positive, got {got}")]
    BadGamma { got: f64 },
    #[error("map needs one window per player, got {got} for {need}")]
    WindowCount { got: usize, need: usize },
    #[error("anchor lies outside the set (distance {distance:.3e})")]
    AnchorInfeasible { distance: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// A point-to-vector map built from a game. The gradient stack is the
/// classical smooth choice; the Qc variants replace each block gradient
/// with a unit direction from the strict or adjusted cone of the player's
/// level set, so they stay usable when objectives are only quasi-convex.
///
/// Cone maps are set-valued in principle; these variants return the
/// max-margin selection from [`cone_direction`], deterministic for a fixed
/// seed, with argmin blocks mapped to the zero block. Solutions found
/// through them are certified downstream by equilibrium verification,
/// never by the solver residual alone.
#[derive(Debug, Clone)]
pub enum ViMap<'g> {
    GradientStack {
        game: &'g RosenGame,
    },
    QcStrict {
        game: &'g RosenGame,
        windows: Option<Vec<Window>>,
        params: LevelParams,
    },
    QcAdjusted {
        game: &'g RosenGame,
        windows: Option<Vec<Window>>,
        params: LevelParams,
    },
}

impl<'g> ViMap<'g> {
    pub fn game(&self) -> &'g RosenGame {
        match self {
            ViMap::GradientStack { game }
            | ViMap::QcStrict { game, .. }
            | ViMap::QcAdjusted { game, .. } => game,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ViMap::GradientStack { .. } => "gradient-stack",
            ViMap::QcStrict { .. } => "qc-strict",
            ViMap::QcAdjusted { .. } => "qc-adjusted",
        }
    }

    fn cone_parts(&self) -> Option<(ConeKind, &Option<Vec<Window>>, &LevelParams)> {
        match self {
            ViMap::GradientStack { .. } => None,
            ViMap::QcStrict { windows, params, .. } => {
                Some((ConeKind::Strict, windows, params))
            }
            ViMap::QcAdjusted { windows, params, .. } => {
                Some((ConeKind::Adjusted, windows, params))
            }
        }
    }
}

/// Outcome of a solver run. For the extragradient method `residual` is
/// the natural-map residual at the initial step size `gamma0`, so it can
/// be recomputed from `point` alone, and the trace records it after every
/// accepted iterate. Other solvers fill the fields with their own
/// residual notion and leave `gamma0` empty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub point: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub method: String,
    pub converged: bool,
    pub gamma0: Option<f64>,
    pub trace: Option<Vec<f64>>,
}

/// Outcome of a sampled Minty test.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum MintyVerdict {
    Refuted { witness: Vec<f64>, value: f64 },
    Consistent { min_value: f64 },
}

impl MintyVerdict {
    pub fn is_refuted(&self) -> bool {
        matches!(self, MintyVerdict::Refuted { .. })
    }
}

#[derive(Debug, Clone)]
pub struct ViParams {
    /// Initial step size; estimated from the map when absent.
    pub gamma0: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// Start profile, projected onto the set; the window center otherwise.
    pub start: Option<Vec<f64>>,
}

impl Default for ViParams {
    fn default() -> Self {
        ViParams { gamma0: None, max_iter: 2000, tol: 1e-8, seed: 42, start: None }
    }
}

fn check_profile(game: &RosenGame, x: &[f64]) -> Result<(), ViError> {
    if x.len() != game.dim() {
        return Err(ViError::ProfileDim { got: x.len(), need: game.dim() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ViError::BadProfile);
    }
    Ok(())
}

/// Evaluate the map at a profile, assembling the result blockwise.
pub fn map_eval(map: &ViMap, x: &[f64]) -> Result<Vec<f64>, ViError> {
    let game = map.game();
    check_profile(game, x)?;
    match map.cone_parts() {
        None => {
            let mut out = Vec::with_capacity(game.dim());
            for nu in 0..game.players() {
                out.extend(game.grad_block(nu, x)?);
            }
            Ok(out)
        }
        Some((kind, windows, params)) => {
            if let Some(ws) = windows {
                if ws.len() != game.players() {
                    return Err(ViError::WindowCount { got: ws.len(), need: game.players() });
                }
            }
            let mut out = Vec::with_capacity(game.dim());
            for nu in 0..game.players() {
                let win = windows.as_ref().map(|ws| &ws[nu]);
                match cone_direction(game, nu, x, kind, win, params)? {
                    ConeDirection::AtArgmin => {
                        out.extend(std::iter::repeat(0.0).take(game.blocks().dims()[nu]));
                    }
                    ConeDirection::Direction { u, .. } => out.extend(u),
                }
            }
            Ok(out)
        }
    }
}

/// Natural-map residual `|x - P_S(x - gamma F(x))|` at step `gamma`.
pub fn svi_residual(
    map: &ViMap,
    set: &ConvexSet,
    x: &[f64],
    gamma: f64,
) -> Result<f64, ViError> {
    if !(gamma > 0.0) {
        return Err(ViError::BadGamma { got: gamma });
    }
    let f = map_eval(map, x)?;
    let shifted: Vec<f64> = x.iter().zip(&f).map(|(xi, fi)| xi - gamma * fi).collect();
    let p = set.project(&shifted, &ProjectOpts::default())?;
    Ok(nrm2(&sub(x, &p)))
}

/// Finite-difference Lipschitz estimate of the map over the game window,
/// from 20 random point pairs. Evaluation failures skip the pair.
fn estimate_lipschitz(map: &ViMap, seed: u64) -> f64 {
    let window = map.game().window();
    let mut rng = rng_for(seed, "svi-gamma");
    let mut ratios = Vec::with_capacity(20);
    for _ in 0..20 {
        let a = random_in_window(window, &mut rng);
        let b = random_in_window(window, &mut rng);
        let gap = nrm2(&sub(&a, &b));
        if gap < 1e-12 {
            continue;
        }
        let (fa, fb) = match (map_eval(map, &a), map_eval(map, &b)) {
            (Ok(fa), Ok(fb)) => (fa, fb),
            _ => continue,
        };
        ratios.push(nrm2(&sub(&fa, &fb)) / gap);
    }
    if ratios.is_empty() {
        return 0.0;
    }
    // The max ratio blows up on discontinuous cone maps when a pair lands
    // across a jump at a tiny gap, and a too-small step has no recovery
    // (halving only shrinks it). An upper quartile is the same number for
    // smooth maps and stays bounded across jumps.
    ratios.sort_by(f64::total_cmp);
    ratios[(ratios.len() * 3 / 4).min(ratios.len() - 1)]
}

fn random_in_window(window: &Window, rng: &mut impl Rng) -> Vec<f64> {
    window
        .lo
        .iter()
        .zip(&window.hi)
        .map(|(&lo, &hi)| if hi > lo { rng.gen_range(lo..hi) } else { lo })
        .collect()
}

/// Extragradient solver for the Stampacchia problem of `map` over `set`.
///
/// Each iteration extrapolates through `y = P_S(x - gamma F(x))` and steps
/// to `P_S(x - gamma F(y))`. A step is accepted unless it raises the
/// residual measured at the fixed initial step size; on an increase gamma
/// is halved (floor 1e-12) and the iterate stays. Equal residual must be
/// accepted: cone maps produce unit vectors whose natural residual is
/// locally constant, and the iteration still makes progress toward the
/// argmin along such plateaus. Measuring the residual at a fixed step
/// keeps the halving schedule from shrinking the stopping test along with
/// it. Stops at `tol`, `max_iter`, or the gamma floor, and reports the
/// last accepted iterate either way with `converged` telling which; the
/// accepted residuals never increase, so that iterate is also a best one.
pub fn svi_solve(
    map: &ViMap,
    set: &ConvexSet,
    params: &ViParams,
) -> Result<SolveResult, ViError> {
    let game = map.game();
    let popts = ProjectOpts::default();
    let gamma0 = match params.gamma0 {
        Some(g) => {
            if !(g > 0.0) {
                return Err(ViError::BadGamma { got: g });
            }
            g
        }
        None => {
            let l = estimate_lipschitz(map, params.seed);
            if l > 1e-9 {
                (0.5 / l).clamp(1e-6, 1e6)
            } else {
                1.0
            }
        }
    };

    let mut x = match &params.start {
        Some(s) => {
            check_profile(game, s)?;
            set.project(s, &popts)?
        }
        None => set.project(&game.window().center(), &popts)?,
    };
    let mut residual = svi_residual(map, set, &x, gamma0)?;
    let mut trace = vec![residual];
    let mut gamma = gamma0;
    let mut iterations = 0;
    let mut converged = residual <= params.tol;

    while !converged && iterations < params.max_iter {
        iterations += 1;
        let fx = map_eval(map, &x)?;
        let mid: Vec<f64> = x.iter().zip(&fx).map(|(xi, fi)| xi - gamma * fi).collect();
        let y = set.project(&mid, &popts)?;
        let fy = map_eval(map, &y)?;
        if fy.iter().all(|v| *v == 0.0) {
            // The extrapolation landed on a zero of the map, so it is a
            // fixed point of the projected step and the corrected step
            // x - gamma*F(y) would never move off x. Adopt it directly;
            // cone maps hit this exactly when y reaches a block argmin.
            residual = svi_residual(map, set, &y, gamma0)?;
            x = y;
            trace.push(residual);
            converged = residual <= params.tol;
            continue;
        }
        let stepped: Vec<f64> = x.iter().zip(&fy).map(|(xi, fi)| xi - gamma * fi).collect();
        let next = set.project(&stepped, &popts)?;
        let next_res = svi_residual(map, set, &next, gamma0)?;
        if next_res <= residual {
            x = next;
            residual = next_res;
            trace.push(residual);
            if residual <= params.tol {
                converged = true;
            }
        } else {
            gamma *= 0.5;
            if gamma < GAMMA_FLOOR {
                break;
            }
        }
    }

    Ok(SolveResult {
        point: x,
        residual,
        iterations,
        method: "extragradient".to_string(),
        converged,
        gamma0: Some(gamma0),
        trace: Some(trace),
    })
}

/// Sampled Minty test of `map` over `set` at the anchor `x_hat`: looks for
/// a point `y` in the set with `<F(y), y - x_hat>` below `-tol`. Points
/// come from quasirandom draws in the game window, kept when inside the
/// set and projected onto it otherwise, plus the anchor itself. A witness
/// is re-evaluated before it refutes.
pub fn minty_test(
    map: &ViMap,
    set: &ConvexSet,
    x_hat: &[f64],
    budget: usize,
    tol: f64,
    seed: u64,
) -> Result<MintyVerdict, ViError> {
    let game = map.game();
    check_profile(game, x_hat)?;
    if !set.contains(x_hat, ANCHOR_TOL) {
        let distance = set.distance(x_hat, &ProjectOpts::default())?;
        return Err(ViError::AnchorInfeasible { distance });
    }

    let popts = ProjectOpts::default();
    let mut candidates = game.window().halton_points(budget, seed);
    candidates.push(x_hat.to_vec());

    let scored: Vec<Option<(Vec<f64>, f64)>> = candidates
        .into_par_iter()
        .map(|w| {
            let y = if set.contains(&w, 1e-9) {
                w
            } else {
                set.project(&w, &popts).ok()?
            };
            let f = map_eval(map, &y).ok()?;
            let v = dot(&f, &sub(&y, x_hat));
            if v.is_finite() {
                Some((y, v))
            } else {
                None
            }
        })
        .collect();

    let mut min_value = f64::INFINITY;
    let mut witness: Option<Vec<f64>> = None;
    for entry in scored.into_iter().flatten() {
        if entry.1 < min_value {
            min_value = entry.1;
            witness = Some(entry.0);
        }
    }

    if min_value < -tol {
        let y = witness.expect("a finite minimum has a witness");
        let f = map_eval(map, &y)?;
        let value = dot(&f, &sub(&y, x_hat));
        if value < -tol {
            return Ok(MintyVerdict::Refuted { witness: y, value });
        }
    }
    Ok(MintyVerdict::Consistent { min_value })
}

/// Sampled Minty test over the cross set with cone-valued maps: for each
/// player, deviations `z` in the slice give profiles `y = (z, rivals)`,
/// and every certified cone direction `u` at `y` must satisfy
/// `<u, z - x_hat_block> >= -tol`.
///
/// Direction candidates per deviation: the pull-back toward the anchor,
/// the max-margin direction from [`cone_direction`], and random unit
/// vectors filtered against one cached level sample, up to 50 in total.
/// A refuting candidate must then pass certification: a fresh cone test
/// at double budget whose sample also includes the anchor block whenever
/// the anchor's own objective value qualifies it for the level set. At an
/// equilibrium that injected point beats every refuting direction, which
/// is exactly the necessary-condition direction of the theory.
pub fn minty_qvi_test(
    game: &RosenGame,
    x_hat: &[f64],
    kind: ConeKind,
    budget: usize,
    tol: f64,
    seed: u64,
) -> Result<MintyVerdict, ViError> {
    check_profile(game, x_hat)?;
    if !game.set().contains(x_hat, ANCHOR_TOL) {
        let distance = game.set().distance(x_hat, &ProjectOpts::default())?;
        return Err(ViError::AnchorInfeasible { distance });
    }

    let level = LevelParams { budget, tol, seed };
    let mut min_value = f64::INFINITY;

    for nu in 0..game.players() {
        let x_block = game.blocks().block(x_hat, nu).to_vec();
        let deviations = sample_slice_points(game, nu, x_hat, seed);
        for (zi, z) in deviations.iter().enumerate() {
            let gap = sub(z, &x_block);
            if nrm2(&gap) < 1e-12 {
                continue;
            }
            let y = game.blocks().assemble(x_hat, nu, z);
            let filter = sample_level_set(game, nu, &y, kind.level(), None, &level)?;
            let candidates = direction_candidates(game, nu, &y, &x_block, kind, &level, &filter, seed, zi)?;

            for u in candidates {
                let ip = dot(&u, &gap);
                if ip < -tol {
                    if certify_direction(game, nu, &y, &u, &x_block, kind, &level)? {
                        let value = dot(&u, &sub(z, &x_block));
                        return Ok(MintyVerdict::Refuted { witness: y, value });
                    }
                } else if ip < min_value {
                    min_value = ip;
                }
            }
        }
    }
    Ok(MintyVerdict::Consistent { min_value })
}

/// Block deviations inside the player's slice: quasirandom window points,
/// kept or projected, then a short segment toward the best response. The
/// violating deviations of a non-equilibrium live near that end.
fn sample_slice_points(game: &RosenGame, nu: usize, x_hat: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let slice = game.slice(nu, x_hat);
    let window = game.block_window(nu);
    let popts = ProjectOpts::default();
    let mut out: Vec<Vec<f64>> = Vec::new();

    for w in window.halton_points(QVI_Z_POINTS * 4, seed) {
        if out.len() >= QVI_Z_POINTS {
            break;
        }
        if slice.contains(&w, 1e-9) {
            out.push(w);
        } else if let Ok(p) = slice.project(&w, &popts) {
            if slice.contains(&p, ANCHOR_TOL) {
                out.push(p);
            }
        }
    }

    if let Ok((br, _)) = best_response_at(game, nu, x_hat, &BrParams::default()) {
        let x_block = game.blocks().block(x_hat, nu);
        for t in [0.25, 0.5, 0.75, 1.0] {
            let p: Vec<f64> = x_block
                .iter()
                .zip(&br)
                .map(|(a, b)| a + t * (b - a))
                .collect();
            if slice.contains(&p, ANCHOR_TOL) {
                out.push(p);
            }
        }
    }

    dedupe_points(out)
}

fn dedupe_points(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let key: Vec<i64> = p.iter().map(|v| (v * 1e9).round() as i64).collect();
        if seen.insert(key) {
            out.push(p);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn direction_candidates(
    game: &RosenGame,
    nu: usize,
    y: &[f64],
    x_block: &[f64],
    kind: ConeKind,
    level: &LevelParams,
    filter: &LevelSample,
    seed: u64,
    zi: usize,
) -> Result<Vec<Vec<f64>>, ViError> {
    let z = game.blocks().block(y, nu);
    let mut out: Vec<Vec<f64>> = Vec::new();

    // the pull-back toward the anchor minimizes the tested inner product
    // over the unit ball, so it is the sharpest possible refuter
    let pull = sub(x_block, z);
    let n = nrm2(&pull);
    if n > 1e-12 {
        out.push(pull.iter().map(|v| v / n).collect());
    }

    if kind != ConeKind::Plain {
        if let ConeDirection::Direction { u, .. } = cone_direction(game, nu, y, kind, None, level)? {
            out.push(u);
        }
    }

    let dim = z.len();
    let mut rng = rng_for(seed ^ ((nu as u64) << 32) ^ (zi as u64), "qvi-directions");
    let mut attempts = 0;
    while out.len() < QVI_DIRECTIONS && attempts < QVI_DIRECTIONS * 4 {
        attempts += 1;
        let mut u: Vec<f64> = (0..dim).map(|_| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            v
        }).collect();
        let norm = nrm2(&u);
        if norm < 1e-9 {
            continue;
        }
        for v in &mut u {
            *v /= norm;
        }
        if filter
            .test_direction(game, &u, level.tol)
            .map(|cv| cv.verdict == crate::levelsets::Consistency::Consistent)
            .unwrap_or(false)
        {
            out.push(u);
        }
    }
    Ok(out)
}

/// Certification of a refuting direction: a fresh level sample at double
/// budget, augmented with the anchor block when the anchor's objective
/// value places it in the level set at `y` (weak inequality for plain
/// cones, strict for the other two; strict membership implies adjusted).
/// The direction is a certified cone member when no sampled point, the
/// injected anchor included, separates from it by more than `tol`.
fn certify_direction(
    game: &RosenGame,
    nu: usize,
    y: &[f64],
    u: &[f64],
    x_block: &[f64],
    kind: ConeKind,
    level: &LevelParams,
) -> Result<bool, ViError> {
    let doubled = LevelParams { budget: level.budget * 2, tol: level.tol, seed: level.seed };
    let sample = sample_level_set(game, nu, y, kind.level(), None, &doubled)?;
    if kind == ConeKind::Strict && sample.is_empty() {
        // empty strict sample: the anchor block of y minimizes its
        // objective in the window, and the cone is the whole space
        return Ok(true);
    }
    let z = game.blocks().block(y, nu);
    let mut margin = f64::NEG_INFINITY;
    for w in &sample.points {
        margin = margin.max(dot(u, &sub(w, z)));
    }

    let theta_y = game.theta(nu, y)?;
    let anchor_profile = game.blocks().assemble(y, nu, x_block);
    let theta_anchor = game.theta(nu, &anchor_profile)?;
    let inject = match kind {
        ConeKind::Plain => theta_anchor <= theta_y + LEVEL_EPS,
        ConeKind::Strict | ConeKind::Adjusted => theta_anchor < theta_y - LEVEL_EPS,
    };
    if inject {
        margin = margin.max(dot(u, &sub(x_block, z)));
    }
    Ok(margin <= level.tol)
}
