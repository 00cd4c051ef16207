//! The Rosen game model: shared convex constraints, per-player objectives,
//! best responses over strategy slices, equilibrium certificates, the
//! Nikaido-Isoda gap and the two-player reduction.
//!
//! Certificates are the ground truth of this crate. Every solver's output
//! is passed through [`verify_equilibrium`], which recomputes per-player
//! regrets by direct best-response search; a `Certified` verdict never
//! rests on a solver's own residual.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::BlockStructure;
use crate::expr::{ExprError, ObjectiveExpr};
use crate::geometry::{golden_min, ConvexSet, GeometryError, ProjectOpts, SliceSet};
use crate::optim::{better, minimize_local, MinimizeOpts};
use crate::sampling::Window;
use crate::vi::{svi_solve, SolveResult, ViMap, ViParams};

/// Default certification tolerance on per-player regrets.
pub const VERIFY_TOL: f64 = 1e-6;

/// Membership tolerance when checking profiles against the shared set.
pub const FEASIBLE_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("{got} objectives for {players} players")]
    ObjectiveCount { got: usize, players: usize },
    #[error("objective {player} lives in R^{got}, game in R^{need}")]
    ObjectiveDim { player: usize, got: usize, need: usize },
    #[error("set lives in R^{got}, blocks span R^{need}")]
    SetDim { got: usize, need: usize },
    #[error("window lives in R^{got}, game in R^{need}")]
    WindowDim { got: usize, need: usize },
    #[error("search window must be bounded")]
    UnboundedWindow,
    #[error("{got} labels for {players} players")]
    LabelCount { got: usize, players: usize },
    #[error("shared set appears empty: projecting the window center failed")]
    EmptySet,
    #[error("player {player}: no feasible start within the window")]
    NoFeasibleStart { player: usize },
    #[error("player {player}: objective failed the quasi-convexity spot check")]
    NotQuasiconvex { player: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Solver(#[from] Box<crate::vi::ViError>),
}

/// A generalized Nash game with one shared constraint set: players `nu`
/// control disjoint blocks of `x`, player `nu` minimizes
/// `theta_nu(., x^{-nu})` over the slice `X_nu(x^{-nu})`.
#[derive(Debug, Clone)]
pub struct RosenGame {
    blocks: BlockStructure,
    set: ConvexSet,
    objectives: Vec<ObjectiveExpr>,
    window: Window,
    labels: Vec<String>,
    /// User assertion that X is a product of per-player sets. Not checked;
    /// gates analyses that are only sound on product sets.
    equals_product: bool,
}

impl RosenGame {
    pub fn new(
        blocks: BlockStructure,
        set: ConvexSet,
        objectives: Vec<ObjectiveExpr>,
        window: Window,
        labels: Option<Vec<String>>,
    ) -> Result<Self, GameError> {
        let n = blocks.dim();
        if set.dim() != n {
            return Err(GameError::SetDim { got: set.dim(), need: n });
        }
        if objectives.len() != blocks.players() {
            return Err(GameError::ObjectiveCount {
                got: objectives.len(),
                players: blocks.players(),
            });
        }
        for (nu, obj) in objectives.iter().enumerate() {
            if obj.dim() != n {
                return Err(GameError::ObjectiveDim { player: nu, got: obj.dim(), need: n });
            }
        }
        if window.dim() != n {
            return Err(GameError::WindowDim { got: window.dim(), need: n });
        }
        if !window.is_bounded() {
            return Err(GameError::UnboundedWindow);
        }
        let labels = match labels {
            Some(l) => {
                if l.len() != blocks.players() {
                    return Err(GameError::LabelCount { got: l.len(), players: blocks.players() });
                }
                l
            }
            None => (0..blocks.players()).map(|nu| format!("player{}", nu + 1)).collect(),
        };
        // nonemptiness probe: the window center must project into the set
        let popts = ProjectOpts::default();
        match set.project(&window.center(), &popts) {
            Ok(_) => {}
            Err(GeometryError::NonConvergence { best, .. }) if set.contains(&best, 1e-6) => {}
            Err(_) => return Err(GameError::EmptySet),
        }
        Ok(RosenGame { blocks, set, objectives, window, labels, equals_product: false })
    }

    pub fn with_product_assertion(mut self, equals_product: bool) -> Self {
        self.equals_product = equals_product;
        self
    }

    pub fn equals_product(&self) -> bool {
        self.equals_product
    }

    pub fn blocks(&self) -> &BlockStructure {
        &self.blocks
    }

    pub fn set(&self) -> &ConvexSet {
        &self.set
    }

    pub fn objective(&self, nu: usize) -> &ObjectiveExpr {
        &self.objectives[nu]
    }

    pub fn players(&self) -> usize {
        self.blocks.players()
    }

    pub fn dim(&self) -> usize {
        self.blocks.dim()
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn block_window(&self, nu: usize) -> Window {
        self.window.restrict(self.blocks.range(nu))
    }

    pub fn label(&self, nu: usize) -> &str {
        &self.labels[nu]
    }

    pub fn theta(&self, nu: usize, x: &[f64]) -> Result<f64, ExprError> {
        self.objectives[nu].eval(x)
    }

    /// Gradient of `theta_nu` in the player's own block coordinates.
    pub fn grad_block(&self, nu: usize, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        Ok(self.objectives[nu].grad(x, &self.blocks.indices(nu))?.d)
    }

    pub fn slice(&self, nu: usize, x: &[f64]) -> SliceSet {
        self.set.slice(&self.blocks, nu, x)
    }

    /// Midpoint quasi-convexity spot check of `theta_nu` in its own block
    /// at sampled rival profiles. Returns a violating pair if one shows up.
    pub fn quasiconvexity_spot_check(
        &self,
        nu: usize,
        pairs: usize,
        seed: u64,
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        let profiles = self.window.halton_points(pairs, seed ^ 0x71c5);
        let bw = self.block_window(nu);
        for (k, profile) in profiles.iter().enumerate() {
            let slice = self.slice(nu, profile);
            let candidates = bw.halton_points(24, seed ^ (k as u64).wrapping_mul(0x9e37));
            let feas: Vec<&Vec<f64>> = candidates
                .iter()
                .filter(|y| slice.contains(y.as_slice(), 1e-9))
                .take(2)
                .collect();
            if feas.len() < 2 {
                continue;
            }
            let (a, b) = (feas[0], feas[1]);
            let mid: Vec<f64> = a.iter().zip(b.iter()).map(|(u, v)| 0.5 * (u + v)).collect();
            let ta = self.theta(nu, &slice.assemble(a));
            let tb = self.theta(nu, &slice.assemble(b));
            let tm = self.theta(nu, &slice.assemble(&mid));
            if let (Ok(ta), Ok(tb), Ok(tm)) = (ta, tb, tm) {
                if tm > ta.max(tb) + 1e-7 {
                    return Some((a.clone(), b.clone()));
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct BrParams {
    pub multistarts: usize,
    /// Value tie width for the lexicographic argmin tie-break.
    pub tol: f64,
    pub seed: u64,
}

impl Default for BrParams {
    fn default() -> Self {
        BrParams { multistarts: 16, tol: 1e-9, seed: 42 }
    }
}

/// Best response of player `nu` against frozen rivals `x_minus` (flat
/// order): minimizes `theta_nu(., x_minus)` over the slice, searching
/// inside the player's window.
pub fn best_response(
    game: &RosenGame,
    nu: usize,
    x_minus: &[f64],
    params: &BrParams,
) -> Result<(Vec<f64>, f64), GameError> {
    let holder = game.block_window(nu).center();
    let anchor = crate::geometry::profile_from_rivals(game.blocks(), nu, &holder, x_minus);
    best_response_at(game, nu, &anchor, params)
}

/// Best response with the rivals taken from a full profile; the profile's
/// own block doubles as a warm start when feasible.
pub fn best_response_at(
    game: &RosenGame,
    nu: usize,
    profile: &[f64],
    params: &BrParams,
) -> Result<(Vec<f64>, f64), GameError> {
    let slice = game.slice(nu, profile);
    let bw = game.block_window(nu);
    let popts = ProjectOpts::default();
    let obj = game.objective(nu);
    let idx = game.blocks().indices(nu);
    let f = |y: &[f64]| obj.eval(&slice.assemble(y)).ok();
    let fg = |y: &[f64]| obj.grad(&slice.assemble(y), &idx).ok().map(|g| g.d);

    if slice.block_dim() == 1 {
        if let Some(interval) = slice.interval() {
            let (lo, hi) = interval?;
            let l = lo.max(bw_lo(&bw, 0));
            let h = hi.min(bw_hi(&bw, 0));
            if l > h + 1e-12 {
                return Err(GameError::NoFeasibleStart { player: nu });
            }
            let h = h.max(l);
            return Ok(line_min(&|t| f(&[t]).unwrap_or(f64::INFINITY), l, h));
        }
    }

    let mut starts: Vec<Vec<f64>> = Vec::new();
    let own = game.blocks().block(profile, nu);
    if slice.contains(own, 1e-9) {
        starts.push(own.to_vec());
    }
    let mut seeds: Vec<Vec<f64>> = vec![vec![0.0; slice.block_dim()], bw.center()];
    seeds.extend(bw.halton_points(params.multistarts, params.seed ^ 0x6b5));
    for s in seeds {
        match slice.project(&s, &popts) {
            Ok(p) => starts.push(p),
            Err(GeometryError::EmptySlice { player }) => {
                return Err(GameError::Geometry(GeometryError::EmptySlice { player }))
            }
            Err(_) => {}
        }
    }
    starts.dedup_by(|a, b| crate::optim::dist(a, b) <= 1e-10);
    if starts.is_empty() {
        return Err(GameError::NoFeasibleStart { player: nu });
    }

    let mo = MinimizeOpts::default();
    let results: Vec<Option<(Vec<f64>, f64)>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            minimize_local(&f, &fg, &slice, &bw, s, params.seed ^ ((i as u64) << 8), &mo)
        })
        .collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for r in results.into_iter().flatten() {
        best = match best {
            None => Some(r),
            Some(b) => {
                if better((&r.0, r.1), (&b.0, b.1), params.tol) {
                    Some(r)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or(GameError::NoFeasibleStart { player: nu })
}

/// Golden section over `[lo, hi]` with a coarse bracketing scan so that
/// mild multimodality off the quasi-convex contract still lands right.
fn line_min(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> (Vec<f64>, f64) {
    if hi - lo <= 1e-14 {
        return (vec![lo], f(lo));
    }
    let cells: usize = 32;
    let mut best_i: usize = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..=cells {
        let t = lo + (hi - lo) * i as f64 / cells as f64;
        let v = f(t);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let a = lo + (hi - lo) * best_i.saturating_sub(1) as f64 / cells as f64;
    let b = lo + (hi - lo) * (best_i + 1).min(cells) as f64 / cells as f64;
    let t = golden_min(f, a, b, 200);
    // golden's argmin, the grid winner and the endpoints, best of all four
    let mut cand = vec![(t, f(t)), (lo + (hi - lo) * best_i as f64 / cells as f64, best_v)];
    cand.push((lo, f(lo)));
    cand.push((hi, f(hi)));
    let (t, v) = cand
        .into_iter()
        .min_by(|x, y| (x.1, x.0).partial_cmp(&(y.1, y.0)).unwrap())
        .unwrap();
    (vec![t], v)
}

fn bw_lo(w: &Window, i: usize) -> f64 {
    let c = w.center();
    let s = w.spans();
    c[i] - 0.5 * s[i]
}

fn bw_hi(w: &Window, i: usize) -> f64 {
    let c = w.center();
    let s = w.spans();
    c[i] + 0.5 * s[i]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Refuted,
}

/// Outcome of direct equilibrium verification: per-player regrets
/// `theta_nu(x) - min over the slice`, all recomputable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumCertificate {
    pub point: Vec<f64>,
    pub feasible: bool,
    pub regrets: Vec<f64>,
    pub best_deviations: Vec<Vec<f64>>,
    pub verdict: Verdict,
    pub tol: f64,
}

impl EquilibriumCertificate {
    pub fn max_regret(&self) -> f64 {
        self.regrets.iter().fold(f64::NEG_INFINITY, |m, r| m.max(*r))
    }
}

/// Check `x_hat` for the equilibrium property by per-player best-response
/// search. Certified iff the profile is feasible and every regret is at
/// most `tol`. Verdicts are one-sided in the usual sense: regrets are
/// upper-bounded by search, so Certified is as strong as the best-response
/// search is complete.
pub fn verify_equilibrium(
    game: &RosenGame,
    x_hat: &[f64],
    tol: f64,
    params: &BrParams,
) -> Result<EquilibriumCertificate, GameError> {
    let feasible = x_hat.len() == game.dim() && game.set().contains(x_hat, FEASIBLE_TOL);
    let mut regrets = Vec::with_capacity(game.players());
    let mut devs = Vec::with_capacity(game.players());
    for nu in 0..game.players() {
        match best_response_at(game, nu, x_hat, params) {
            Ok((y, v)) => {
                let here = game.theta(nu, x_hat)?;
                regrets.push(here - v);
                devs.push(y);
            }
            Err(GameError::Geometry(GeometryError::EmptySlice { .. }))
            | Err(GameError::NoFeasibleStart { .. })
                if !feasible =>
            {
                // infeasible profiles may have empty slices; the verdict
                // below is already Refuted
                regrets.push(f64::INFINITY);
                devs.push(game.blocks().block(x_hat, nu).to_vec());
            }
            Err(e) => return Err(e),
        }
    }
    let certified = feasible && regrets.iter().all(|r| *r <= tol);
    Ok(EquilibriumCertificate {
        point: x_hat.to_vec(),
        feasible,
        regrets,
        best_deviations: devs,
        verdict: if certified { Verdict::Certified } else { Verdict::Refuted },
        tol,
    })
}

/// The Nikaido-Isoda gap `sum_nu theta_nu(y^nu, x^{-nu}) - theta_nu(x)`.
/// At an equilibrium the minimum over the rectangle of slices is zero.
pub fn nikaido_isoda(game: &RosenGame, x: &[f64], y: &[f64]) -> Result<f64, ExprError> {
    let mut acc = 0.0;
    for nu in 0..game.players() {
        let mixed = game.blocks().assemble(x, nu, game.blocks().block(y, nu));
        acc += game.theta(nu, &mixed)? - game.theta(nu, x)?;
    }
    Ok(acc)
}

/// The two evaluators of the two-player reduction: `f1(x, y) = ||x - y||`
/// and `f2(x, y) = sum_nu theta_nu(y^nu, x^{-nu})`, both over the shared
/// set on each side.
pub struct ReductionMaps<'g> {
    game: &'g RosenGame,
    norm: crate::geometry::NormKind,
}

impl<'g> ReductionMaps<'g> {
    pub fn f1(&self, x: &[f64], y: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(y).map(|(u, v)| u - v).collect();
        self.norm.eval(&d)
    }

    pub fn f2(&self, x: &[f64], y: &[f64]) -> Result<f64, ExprError> {
        let mut acc = 0.0;
        for nu in 0..self.game.players() {
            let mixed = self.game.blocks().assemble(x, nu, self.game.blocks().block(y, nu));
            acc += self.game.theta(nu, &mixed)?;
        }
        Ok(acc)
    }
}

pub fn reduction_maps(game: &RosenGame) -> ReductionMaps<'_> {
    reduction_maps_with_norm(game, crate::geometry::NormKind::L2)
}

pub fn reduction_maps_with_norm(
    game: &RosenGame,
    norm: crate::geometry::NormKind,
) -> ReductionMaps<'_> {
    ReductionMaps { game, norm }
}

/// Joint minimization of `f2(x, .)` over the shared set, the y-step of the
/// reduction dynamics.
pub(crate) fn reduction_y_step(
    game: &RosenGame,
    x: &[f64],
    y_warm: &[f64],
    params: &BrParams,
    pg_cap: usize,
) -> Result<(Vec<f64>, f64), GameError> {
    let maps = reduction_maps(game);
    let f = |y: &[f64]| maps.f2(x, y).ok();
    let grad = |y: &[f64]| {
        let mut g = vec![0.0; game.dim()];
        for nu in 0..game.players() {
            let mixed = game.blocks().assemble(x, nu, game.blocks().block(y, nu));
            match game.objective(nu).grad(&mixed, &game.blocks().indices(nu)) {
                Ok(gr) => g[game.blocks().range(nu)].copy_from_slice(&gr.d),
                Err(_) => return None,
            }
        }
        Some(g)
    };
    let popts = ProjectOpts::default();
    let mut starts = vec![y_warm.to_vec(), x.to_vec()];
    starts.extend(game.window().halton_points(params.multistarts, params.seed ^ 0x2d1));
    let mut projected = Vec::new();
    for s in &starts {
        if let Ok(p) = game.set().project(s, &popts) {
            projected.push(p);
        }
    }
    projected.dedup_by(|a, b| crate::optim::dist(a, b) <= 1e-10);
    if projected.is_empty() {
        return Err(GameError::EmptySet);
    }
    let mo = MinimizeOpts { pg_iters: pg_cap, segment_rounds: 12, step_tol: 1e-11 };
    let results: Vec<Option<(Vec<f64>, f64)>> = projected
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            minimize_local(
                &f,
                &grad,
                game.set(),
                game.window(),
                s,
                params.seed ^ 0x40_00 ^ ((i as u64) << 9),
                &mo,
            )
        })
        .collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for r in results.into_iter().flatten() {
        best = match best {
            None => Some(r),
            Some(b) => {
                if better((&r.0, r.1), (&b.0, b.1), params.tol) {
                    Some(r)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or(GameError::EmptySet)
}

/// Method dispatch for the solve facade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Svi,
    QcSvi,
    QcSviAdjusted,
    BestResponse,
    Reduction,
}

impl SolveMethod {
    pub fn label(self) -> &'static str {
        match self {
            SolveMethod::Svi => "svi",
            SolveMethod::QcSvi => "qc-svi",
            SolveMethod::QcSviAdjusted => "qc-svi-adjusted",
            SolveMethod::BestResponse => "best-response",
            SolveMethod::Reduction => "reduction",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveParams {
    /// Stopping tolerance of the chosen method.
    pub tol: f64,
    /// Certification tolerance for the closing verification pass.
    pub verify_tol: f64,
    pub max_iter: usize,
    /// Level sampling budget for the qc cone maps.
    pub budget: usize,
    pub seed: u64,
    pub start: Option<Vec<f64>>,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            tol: 1e-8,
            verify_tol: VERIFY_TOL,
            max_iter: 2000,
            budget: 2000,
            seed: 42,
            start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReductionParams {
    pub max_rounds: usize,
    pub tol: f64,
    pub seed: u64,
    pub start: Option<Vec<f64>>,
}

impl Default for ReductionParams {
    fn default() -> Self {
        ReductionParams { max_rounds: 100, tol: 1e-8, seed: 42, start: None }
    }
}

/// Alternating best responses on the two-player reduction: player 1
/// projects onto the set (the exact minimizer of the norm map), player 2
/// jointly minimizes `f2(x, .)`. Stops when the pair gap and the y-step
/// improvement both fall under `tol`; the fixed pairs of these dynamics
/// project onto equilibria of the original game, which is why the reported
/// residual is the maximal regret of the closing verification, not the
/// pair gap. Convergence is not guaranteed (the reduction result is one
/// directional), so exhausted rounds report the best pair seen with the
/// flag down rather than asserting a limit.
pub fn solve_reduction(
    game: &RosenGame,
    params: &ReductionParams,
) -> Result<SolveResult, GameError> {
    let popts = ProjectOpts::default();
    let maps = reduction_maps(game);
    let br = BrParams { seed: params.seed, ..BrParams::default() };
    let mut y = match &params.start {
        Some(s) => game.set().project(s, &popts)?,
        None => game.set().project(&game.window().center(), &popts)?,
    };
    let mut trace = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut converged = false;
    let mut rounds = 0;
    let mut x = y.clone();

    while rounds < params.max_rounds {
        rounds += 1;
        x = game.set().project(&y, &popts)?;
        let before = maps.f2(&x, &y)?;
        let (y_next, after) = reduction_y_step(game, &x, &y, &br, 2000)?;
        let gap = crate::optim::dist(&x, &y_next);
        trace.push(gap);
        y = y_next;
        if best.as_ref().is_none_or(|b| gap < b.1) {
            best = Some((x.clone(), gap));
        }
        if gap <= params.tol && before - after <= params.tol {
            converged = true;
            break;
        }
    }

    let point = if converged {
        x
    } else {
        best.map(|b| b.0).expect("at least one round ran")
    };
    let cert = verify_equilibrium(game, &point, VERIFY_TOL, &br)?;
    Ok(SolveResult {
        point,
        residual: cert.max_regret(),
        iterations: rounds,
        method: "reduction".to_string(),
        converged,
        gamma0: None,
        trace: Some(trace),
    })
}

/// Cyclic best-response sweeps; stops when a full sweep moves the profile
/// by no more than `tol`. The residual is the last sweep's movement.
fn gauss_seidel(
    game: &RosenGame,
    params: &SolveParams,
    br: &BrParams,
) -> Result<SolveResult, GameError> {
    let popts = ProjectOpts::default();
    let mut x = match &params.start {
        Some(s) => game.set().project(s, &popts)?,
        None => game.set().project(&game.window().center(), &popts)?,
    };
    let cap = params.max_iter.min(500);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < cap {
        sweeps += 1;
        let prev = x.clone();
        for nu in 0..game.players() {
            let (block, _) = best_response_at(game, nu, &x, br)?;
            x = game.blocks().assemble(&x, nu, &block);
        }
        let delta = crate::optim::dist(&prev, &x);
        trace.push(delta);
        if delta <= params.tol {
            converged = true;
            break;
        }
    }

    let residual = trace.last().copied().unwrap_or(0.0);
    Ok(SolveResult {
        point: x,
        residual,
        iterations: sweeps,
        method: "best-response".to_string(),
        converged,
        gamma0: None,
        trace: Some(trace),
    })
}

/// Solve facade: runs the chosen method, then always closes with a direct
/// verification pass. The qc methods require quasi-convexity in the own
/// variable, which the user asserts and a midpoint spot check screens; the
/// certificate is reported alongside the point even when Refuted.
pub fn solve(
    game: &RosenGame,
    method: SolveMethod,
    params: &SolveParams,
) -> Result<(SolveResult, EquilibriumCertificate), GameError> {
    let br = BrParams { seed: params.seed, ..BrParams::default() };
    let vi_params = ViParams {
        gamma0: None,
        max_iter: params.max_iter,
        tol: params.tol,
        seed: params.seed,
        start: params.start.clone(),
    };
    let boxed = |e: crate::vi::ViError| GameError::Solver(Box::new(e));

    let mut result = match method {
        SolveMethod::Svi => {
            let map = ViMap::GradientStack { game };
            svi_solve(&map, game.set(), &vi_params).map_err(boxed)?
        }
        SolveMethod::QcSvi | SolveMethod::QcSviAdjusted => {
            for nu in 0..game.players() {
                if game.quasiconvexity_spot_check(nu, 64, params.seed).is_some() {
                    return Err(GameError::NotQuasiconvex { player: nu });
                }
            }
            let level = crate::levelsets::LevelParams {
                budget: params.budget,
                seed: params.seed,
                ..Default::default()
            };
            let map = if method == SolveMethod::QcSvi {
                ViMap::QcStrict { game, windows: None, params: level }
            } else {
                ViMap::QcAdjusted { game, windows: None, params: level }
            };
            svi_solve(&map, game.set(), &vi_params).map_err(boxed)?
        }
        SolveMethod::BestResponse => gauss_seidel(game, params, &br)?,
        SolveMethod::Reduction => solve_reduction(
            game,
            &ReductionParams {
                max_rounds: params.max_iter.min(100),
                tol: params.tol,
                seed: params.seed,
                start: params.start.clone(),
            },
        )?,
    };
    result.method = method.label().to_string();

    let cert = verify_equilibrium(game, &result.point, params.verify_tol, &br)?;
    Ok((result, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::testgames::{aad_game, cavazzuti_game};
    use approx::assert_abs_diff_eq;

    #[test]
    fn construction_validates_shapes() {
        let set = ConvexSet::bbox(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let err = RosenGame::new(
            BlockStructure::new(vec![1, 1]),
            set.clone(),
            vec![parse("x1", 2).unwrap()],
            Window::new(vec![0.0, 0.0], vec![1.0, 1.0]),
            None,
        );
        assert!(matches!(err, Err(GameError::ObjectiveCount { got: 1, players: 2 })));
        let err = RosenGame::new(
            BlockStructure::new(vec![1, 1]),
            set.clone(),
            vec![parse("x1", 2).unwrap(), parse("x2", 2).unwrap()],
            Window::new(vec![0.0], vec![1.0]),
            None,
        );
        assert!(matches!(err, Err(GameError::WindowDim { .. })));
        let err = RosenGame::new(
            BlockStructure::new(vec![1, 1]),
            set,
            vec![parse("x1", 2).unwrap(), parse("x2", 2).unwrap()],
            Window::new(vec![0.0, 0.0], vec![f64::INFINITY, 1.0]),
            None,
        );
        assert!(matches!(err, Err(GameError::UnboundedWindow)));
    }

    #[test]
    fn empty_set_is_rejected() {
        let set = ConvexSet::polyhedron(vec![vec![1.0], vec![-1.0]], vec![-1.0, -1.0]).unwrap();
        let err = RosenGame::new(
            BlockStructure::new(vec![1]),
            set,
            vec![parse("x1", 1).unwrap()],
            Window::new(vec![-2.0], vec![2.0]),
            None,
        );
        assert!(matches!(err, Err(GameError::EmptySet)));
    }

    #[test]
    fn best_response_on_the_triangle() {
        let game = aad_game();
        let (y, v) = best_response(&game, 0, &[0.5], &BrParams::default()).unwrap();
        assert_abs_diff_eq!(y[0], 0.25, epsilon = 1e-8);
        assert_abs_diff_eq!(v, 3.0625, epsilon = 1e-8);
        // interior argmin when the slice is wide enough
        let wide = RosenGame::new(
            BlockStructure::new(vec![1, 1]),
            ConvexSet::bbox(vec![0.0, 0.0], vec![3.0, 3.0]).unwrap(),
            vec![parse("(x1-2)^2", 2).unwrap(), parse("(x2-2)^2", 2).unwrap()],
            Window::new(vec![0.0, 0.0], vec![3.0, 3.0]),
            None,
        )
        .unwrap();
        let (y, v) = best_response(&wide, 0, &[1.0], &BrParams::default()).unwrap();
        assert_abs_diff_eq!(y[0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn best_response_cavazzuti_second_player() {
        let game = cavazzuti_game();
        let (y, v) = best_response(&game, 1, &[0.0], &BrParams::default()).unwrap();
        assert_abs_diff_eq!(y[0], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn verify_certifies_the_segment_point() {
        let game = aad_game();
        let cert = verify_equilibrium(&game, &[0.25, 0.5], VERIFY_TOL, &BrParams::default())
            .unwrap();
        assert!(cert.feasible);
        assert_eq!(cert.verdict, Verdict::Certified);
        assert!(cert.max_regret() <= 1e-8);
    }

    #[test]
    fn verify_refutes_the_origin_with_hand_regret() {
        let game = aad_game();
        let cert =
            verify_equilibrium(&game, &[0.0, 0.0], VERIFY_TOL, &BrParams::default()).unwrap();
        assert_eq!(cert.verdict, Verdict::Refuted);
        assert!(cert.feasible);
        assert_abs_diff_eq!(cert.regrets[0], 1.75, epsilon = 1e-7);
        assert_abs_diff_eq!(cert.best_deviations[0][0], 0.5, epsilon = 1e-7);
    }

    #[test]
    fn verify_certifies_cavazzuti_corner() {
        let game = cavazzuti_game();
        let cert =
            verify_equilibrium(&game, &[0.0, -1.0], VERIFY_TOL, &BrParams::default()).unwrap();
        assert_eq!(cert.verdict, Verdict::Certified);
    }

    #[test]
    fn infeasible_points_are_refuted() {
        let game = aad_game();
        let cert =
            verify_equilibrium(&game, &[0.9, 0.9], VERIFY_TOL, &BrParams::default()).unwrap();
        assert!(!cert.feasible);
        assert_eq!(cert.verdict, Verdict::Refuted);
    }

    #[test]
    fn nikaido_isoda_values() {
        let game = aad_game();
        assert_abs_diff_eq!(
            nikaido_isoda(&game, &[0.3, 0.2], &[0.3, 0.2]).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            nikaido_isoda(&game, &[0.0, 0.0], &[0.5, 0.5]).unwrap(),
            -3.5,
            epsilon = 1e-12
        );
        // at the certified point the gap over the rectangle of slices is
        // nonnegative and vanishes at y = x
        let x = [0.25, 0.5];
        for i in 0..=20 {
            for j in 0..=20 {
                let y = [0.25 * i as f64 / 20.0, 0.5 * j as f64 / 20.0];
                assert!(nikaido_isoda(&game, &x, &y).unwrap() >= -1e-12);
            }
        }
    }

    #[test]
    fn reduction_map_values() {
        let game = aad_game();
        let maps = reduction_maps(&game);
        assert_eq!(maps.f1(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_abs_diff_eq!(maps.f1(&[0.0, 0.0], &[3.0, 4.0]), 5.0, epsilon = 1e-12);
        // f2 ignores x for this game
        let a = maps.f2(&[0.9, 0.1], &[0.2, 0.3]).unwrap();
        let b = maps.f2(&[0.0, 0.0], &[0.2, 0.3]).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        assert_abs_diff_eq!(a, (0.2f64 - 2.0).powi(2) + (0.3f64 - 2.0).powi(2), epsilon = 1e-12);
    }

    #[test]
    fn quasiconvexity_spot_check_flags_a_bump() {
        // a double-well in the own variable is not quasi-convex; built
        // from polynomials since the grammar is fixed
        let game = RosenGame::new(
            BlockStructure::new(vec![1, 1]),
            ConvexSet::bbox(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
            vec![
                parse("(x1^2-1)^2", 2).unwrap(),
                parse("x2^2", 2).unwrap(),
            ],
            Window::new(vec![-2.0, -2.0], vec![2.0, 2.0]),
            None,
        )
        .unwrap();
        assert!(game.quasiconvexity_spot_check(0, 40, 42).is_some());
        assert!(game.quasiconvexity_spot_check(1, 40, 42).is_none());
    }

    #[test]
    fn y_step_leaves_the_certified_segment_point() {
        // (0.25, 0.5) is a certified equilibrium, yet it is not a fixed
        // pair of the reduction dynamics: the joint subproblem pulls to
        // the projection of (2, 2) onto the triangle
        let game = aad_game();
        let x = vec![0.25, 0.5];
        let br = BrParams::default();
        let (y, _) = reduction_y_step(&game, &x, &x, &br, 2000).unwrap();
        assert!((y[0] - 0.0).abs() < 1e-6 && (y[1] - 1.0).abs() < 1e-6, "y = {y:?}");
    }

    #[test]
    fn reduction_solves_the_triangle() {
        let game = aad_game();
        let out = solve_reduction(&game, &ReductionParams::default()).unwrap();
        assert!(out.converged, "gap trace {:?}", out.trace);
        assert!(out.iterations <= 5, "{} rounds", out.iterations);
        assert!((out.point[0] - 0.0).abs() < 1e-6 && (out.point[1] - 1.0).abs() < 1e-6);
        assert!(out.residual <= 1e-6, "regret {}", out.residual);
    }

    #[test]
    fn reduction_stops_at_a_fixed_pair_in_one_round() {
        let game = crate::testgames::separable_game();
        let params = ReductionParams {
            tol: 1e-6,
            ..ReductionParams::default()
        };
        let out = solve_reduction(&game, &params).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert!(out.point.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn reduction_certifies_a_random_convex_game() {
        let game = crate::testgames::random_convex_game(7);
        let out = solve_reduction(&game, &ReductionParams::default()).unwrap();
        assert!(out.converged, "gap trace {:?}", out.trace);
        assert!(out.residual <= 1e-5, "regret {}", out.residual);
    }

    #[test]
    fn solve_svi_certifies_the_triangle() {
        let game = aad_game();
        let (out, cert) = solve(&game, SolveMethod::Svi, &SolveParams::default()).unwrap();
        assert_eq!(out.method, "svi");
        assert_eq!(cert.verdict, Verdict::Certified);
        assert!((out.point[0] - 0.0).abs() < 1e-4 && (out.point[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn solve_best_response_reaches_the_segment() {
        let game = aad_game();
        let (out, cert) = solve(
            &game,
            SolveMethod::BestResponse,
            &SolveParams { start: Some(vec![0.4, 0.1]), ..SolveParams::default() },
        )
        .unwrap();
        assert_eq!(cert.verdict, Verdict::Certified);
        assert!(out.converged);
        let residue = (2.0 * out.point[0] + out.point[1] - 1.0).abs();
        assert!(residue <= 1e-6, "left the segment: {:?}", out.point);
    }

    #[test]
    fn solve_qc_svi_certifies_cavazzuti() {
        let game = cavazzuti_game();
        let (out, cert) = solve(&game, SolveMethod::QcSvi, &SolveParams::default()).unwrap();
        assert_eq!(cert.verdict, Verdict::Certified, "point {:?}", out.point);
    }

    #[test]
    fn solve_rejects_a_non_quasiconvex_objective() {
        let game = RosenGame::new(
            BlockStructure::new(vec![1, 1]),
            ConvexSet::bbox(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
            vec![parse("(x1^2-1)^2", 2).unwrap(), parse("x2^2", 2).unwrap()],
            Window::new(vec![-2.0, -2.0], vec![2.0, 2.0]),
            None,
        )
        .unwrap();
        let err = solve(&game, SolveMethod::QcSvi, &SolveParams::default()).unwrap_err();
        assert!(matches!(err, GameError::NotQuasiconvex { player: 0 }), "{err}");
    }

    #[test]
    fn certificates_recompute_identically() {
        let game = aad_game();
        let br = BrParams::default();
        let a = verify_equilibrium(&game, &[0.25, 0.5], VERIFY_TOL, &br).unwrap();
        let b = verify_equilibrium(&game, &[0.25, 0.5], VERIFY_TOL, &br).unwrap();
        for (ra, rb) in a.regrets.iter().zip(&b.regrets) {
            assert!((ra - rb).abs() <= 1e-9);
        }
    }

    #[test]
    fn svi_certified_point_passes_the_plain_minty_test() {
        let game = aad_game();
        let (out, cert) = solve(&game, SolveMethod::Svi, &SolveParams::default()).unwrap();
        assert_eq!(cert.verdict, Verdict::Certified);
        let v = crate::vi::minty_qvi_test(
            &game,
            &out.point,
            crate::levelsets::ConeKind::Plain,
            2000,
            1e-7,
            42,
        )
        .unwrap();
        assert!(!v.is_refuted(), "{v:?}");
    }
}

