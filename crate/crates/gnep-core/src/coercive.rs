//! Coerciveness conditions for unbounded shared sets, checked by sampling:
//! the sphere conditions quantify over `x` in `X` with `|x| = rho`, the
//! exterior conditions over `X` outside the closed ball. Each asks for an
//! admissible deviation `y`; a Refuted verdict means one outer point
//! survived a certified inner grid with no admissible `y` found. The
//! truncation pipeline solves the game on `X` cut to growing balls and
//! certifies candidates against the untruncated game.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::BlockStructure;
use crate::expr::ExprError;
use crate::geometry::{
    block_rectangle_min_norm, nrm2, sub, ConvexSet, GeometryError, ProjectOpts, SliceSet,
};
use crate::nash::{
    solve, verify_equilibrium, BrParams, EquilibriumCertificate, GameError, RosenGame,
    SolveMethod, SolveParams, Verdict,
};
use crate::sampling::{rng_for, Window};
use crate::vi::SolveResult;

/// Margin for the strict clauses `|y| < rho` and the open mixed ball.
pub const STRICT_MARGIN: f64 = 1e-9;
/// Slack granted to the weak clauses (closed ball, objective inequality).
const WEAK_EPS: f64 = 1e-12;
/// Membership tolerance inside the inner search. Deliberately far below
/// `STRICT_MARGIN`: a looser test would let tolerance slack manufacture
/// admissible points at exactly-critical witnesses.
const INNER_MEMBER_TOL: f64 = 1e-12;
/// Acceptance tolerance on `|x| = rho` for sphere samples.
const SPHERE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CoerciveError {
    #[error("rho must be positive, got {got}")]
    BadRho { got: f64 },
    #[error("X misses the ball of radius {rho}: nearest point has norm {min_norm}")]
    Precondition { rho: f64, min_norm: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    C0,
    C1,
    C2,
    C3,
}

impl Condition {
    /// Outer quantifier domain: sphere `|x| = rho` for C0/C1, the exterior
    /// `X` minus the closed ball for C2/C3.
    fn on_sphere(self) -> bool {
        matches!(self, Condition::C0 | Condition::C1)
    }

    /// Whether the deviation `y` ranges over all of `X` (C0) or over the
    /// block rectangle of slices (C1, C2, C3).
    fn whole_set(self) -> bool {
        matches!(self, Condition::C0)
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Condition::C0 => "c0",
            Condition::C1 => "c1",
            Condition::C2 => "c2",
            Condition::C3 => "c3",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoerciveOutcome {
    Refuted,
    ConsistentAtBudget,
    PreconditionFailed,
}

/// The outer point that refuted the condition, together with the least
/// violating deviation the inner search reached and the clause it breaks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoerciveWitness {
    pub x: Vec<f64>,
    pub best_y: Vec<f64>,
    pub violated: String,
    pub violation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoerciveVerdict {
    pub condition: Condition,
    pub rho: f64,
    pub verdict: CoerciveOutcome,
    pub witness: Option<CoerciveWitness>,
    pub samples_used: usize,
}

#[derive(Debug, Clone)]
pub struct CoerciveParams {
    /// Outer sample budget; the certifying inner grid spends ten times it.
    pub budget: usize,
    pub seed: u64,
}

impl Default for CoerciveParams {
    fn default() -> Self {
        CoerciveParams { budget: 2000, seed: 42 }
    }
}

/// Clause of the inner existence problem, used to name what the best
/// candidate still violates.
#[derive(Debug, Clone, Copy)]
enum Clause {
    Ball,
    MixedBall(usize),
    Objective(usize),
}

impl Clause {
    fn describe(self) -> String {
        match self {
            Clause::Ball => "|y| < rho".to_string(),
            Clause::MixedBall(nu) => {
                format!("(y^{nu}, x^-{nu}) in the rho ball", nu = nu + 1)
            }
            Clause::Objective(nu) => {
                format!("theta_{nu}(y^{nu}, x^-{nu}) <= theta_{nu}(x)", nu = nu + 1)
            }
        }
    }
}

/// Inner existence problem at one outer point: does an admissible `y`
/// exist for the condition's clauses?
struct Inner<'g> {
    game: &'g RosenGame,
    which: Condition,
    rho: f64,
    x: Vec<f64>,
    theta_x: Vec<f64>,
    /// Slice per player for the rectangle domains, with cached closed-form
    /// intervals where the block is one-dimensional.
    slices: Option<Vec<(SliceSet, Option<(f64, f64)>)>>,
}

impl<'g> Inner<'g> {
    fn new(game: &'g RosenGame, which: Condition, rho: f64, x: &[f64]) -> Result<Self, CoerciveError> {
        let mut theta_x = Vec::with_capacity(game.players());
        for nu in 0..game.players() {
            theta_x.push(game.theta(nu, x)?);
        }
        let slices = if which.whole_set() {
            None
        } else {
            let mut v = Vec::with_capacity(game.players());
            for nu in 0..game.players() {
                let s = game.slice(nu, x);
                let iv = match s.interval() {
                    Some(Ok(b)) => Some(b),
                    _ => None,
                };
                v.push((s, iv));
            }
            Some(v)
        };
        Ok(Inner { game, which, rho, x: x.to_vec(), theta_x, slices })
    }

    fn blocks(&self) -> &BlockStructure {
        self.game.blocks()
    }

    /// Worst clause violation at `y`; <= 0 means every clause holds.
    fn score(&self, y: &[f64]) -> Result<(f64, Clause), CoerciveError> {
        let mut worst = f64::NEG_INFINITY;
        let mut clause = Clause::Ball;
        match self.which {
            Condition::C0 | Condition::C3 => {
                let v = nrm2(y) - (self.rho - STRICT_MARGIN);
                if v > worst {
                    worst = v;
                    clause = Clause::Ball;
                }
            }
            Condition::C1 | Condition::C2 => {}
        }
        for nu in 0..self.game.players() {
            let mixed = self.blocks().assemble(&self.x, nu, self.blocks().block(y, nu));
            match self.which {
                Condition::C1 => {
                    let v = nrm2(&mixed) - (self.rho - STRICT_MARGIN);
                    if v > worst {
                        worst = v;
                        clause = Clause::MixedBall(nu);
                    }
                }
                Condition::C2 => {
                    let v = nrm2(&mixed) - (self.rho + WEAK_EPS);
                    if v > worst {
                        worst = v;
                        clause = Clause::MixedBall(nu);
                    }
                }
                Condition::C0 | Condition::C3 => {}
            }
            let tv = self.game.theta(nu, &mixed)? - self.theta_x[nu] - WEAK_EPS;
            if tv > worst {
                worst = tv;
                clause = Clause::Objective(nu);
            }
        }
        Ok((worst, clause))
    }

    fn in_domain(&self, y: &[f64]) -> bool {
        if !self.game.window().contains(y, 1e-9) {
            return false;
        }
        match &self.slices {
            None => self.game.set().contains(y, INNER_MEMBER_TOL),
            Some(slices) => slices.iter().enumerate().all(|(nu, (s, iv))| {
                let b = self.blocks().block(y, nu);
                match iv {
                    Some((lo, hi)) => b[0] >= lo - INNER_MEMBER_TOL && b[0] <= hi + INNER_MEMBER_TOL,
                    None => s.contains(b, INNER_MEMBER_TOL),
                }
            }),
        }
    }

    fn admissible(&self, y: &[f64]) -> Result<bool, CoerciveError> {
        Ok(self.in_domain(y) && self.score(y)?.0 <= 0.0)
    }

    /// Pull `y` toward the deviation domain. Slices are snapped blockwise
    /// (cheap closed forms or one-dimensional searches); the whole-set
    /// domain of C0 is only window-clamped, because projecting onto a
    /// general set costs milliseconds and the membership filter afterwards
    /// does the same job on the search scale.
    fn pull_in(&self, y: &[f64], opts: &ProjectOpts) -> Result<Vec<f64>, CoerciveError> {
        let mut out = y.to_vec();
        if let Some(slices) = &self.slices {
            for (nu, (s, iv)) in slices.iter().enumerate() {
                let range = self.blocks().range(nu);
                match iv {
                    Some((lo, hi)) => out[range.start] = out[range.start].clamp(*lo, *hi),
                    None => {
                        let p = s.project(&y[range.clone()], opts)?;
                        out[range].copy_from_slice(&p);
                    }
                }
            }
        }
        let w = self.game.window();
        for (i, v) in out.iter_mut().enumerate() {
            *v = v.clamp(w.lo[i], w.hi[i]);
        }
        Ok(out)
    }
}

struct InnerOutcome {
    admissible: Option<Vec<f64>>,
    best_y: Vec<f64>,
    best_g: f64,
    best_clause: Clause,
}

/// Low-discrepancy scan plus pattern descent on the worst violation.
fn inner_search(
    inner: &Inner,
    budget: usize,
    seed: u64,
) -> Result<InnerOutcome, CoerciveError> {
    let popts = ProjectOpts::default();
    let window = inner.game.window();
    let mut rng = rng_for(seed, "coercive-inner");
    let mut best_y = inner.x.clone();
    let (mut best_g, mut best_clause) = inner.score(&best_y)?;

    let consider = |y: Vec<f64>,
                        best_y: &mut Vec<f64>,
                        best_g: &mut f64,
                        best_clause: &mut Clause|
     -> Result<Option<Vec<f64>>, CoerciveError> {
        if !inner.in_domain(&y) {
            return Ok(None);
        }
        let (g, c) = inner.score(&y)?;
        if g < *best_g {
            *best_g = g;
            *best_clause = c;
            *best_y = y.clone();
        }
        if g <= 0.0 {
            return Ok(Some(y));
        }
        Ok(None)
    };

    // deterministic first candidates: the anchor itself and a pull-in ray
    for t in [1.0, 0.9, 0.75, 0.5, 0.25, 0.0] {
        let ray: Vec<f64> = inner.x.iter().map(|v| t * v).collect();
        let y = if t == 1.0 { ray } else { inner.pull_in(&ray, &popts)? };
        if let Some(found) = consider(y, &mut best_y, &mut best_g, &mut best_clause)? {
            return Ok(InnerOutcome { admissible: Some(found), best_y, best_g, best_clause });
        }
    }

    // quasirandom scan; rectangle domains with interval slices are clamped
    // into the domain instead of rejected
    let all_intervals = matches!(
        &inner.slices,
        Some(s) if s.iter().all(|(_, iv)| iv.is_some())
    );
    for mut y in window.halton_points(budget, rng.gen()) {
        if all_intervals {
            if let Some(slices) = &inner.slices {
                for (nu, (_, iv)) in slices.iter().enumerate() {
                    let (lo, hi) = iv.expect("interval cached");
                    let i = inner.blocks().range(nu).start;
                    y[i] = y[i].clamp(lo.max(window.lo[i]), hi.min(window.hi[i]));
                }
            }
        }
        if let Some(found) = consider(y, &mut best_y, &mut best_g, &mut best_clause)? {
            return Ok(InnerOutcome { admissible: Some(found), best_y, best_g, best_clause });
        }
    }

    // pattern descent from the least violating point seen so far
    let n = window.dim();
    let mut delta = window.spans().iter().fold(0.0_f64, |m, s| m.max(*s)) * 0.25;
    let mut y = best_y.clone();
    while delta > 1e-10 {
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(2 * n + 4);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            dirs.push(e.clone());
            e[i] = -1.0;
            dirs.push(e);
        }
        let nm = nrm2(&y);
        if nm > 1e-12 {
            dirs.push(y.iter().map(|v| -v / nm).collect());
        }
        for _ in 0..3 {
            dirs.push(random_unit(&mut rng, n));
        }
        for d in dirs {
            let probe: Vec<f64> = y.iter().zip(&d).map(|(a, b)| a + delta * b).collect();
            let cand = inner.pull_in(&probe, &popts)?;
            if !inner.in_domain(&cand) {
                continue;
            }
            let (g, c) = inner.score(&cand)?;
            if g < best_g {
                best_g = g;
                best_clause = c;
                best_y = cand.clone();
                y = cand.clone();
            }
            if g <= 0.0 {
                return Ok(InnerOutcome { admissible: Some(cand), best_y, best_g, best_clause });
            }
        }
        delta *= 0.5;
    }

    Ok(InnerOutcome { admissible: None, best_y, best_g, best_clause })
}

/// Certifying lattice over the window, restricted per axis to the slice
/// interval where one is known, with the interval endpoints added. Returns
/// an admissible point or proves the lattice clean.
fn grid_search(inner: &Inner, grid_budget: usize) -> Result<Option<Vec<f64>>, CoerciveError> {
    let window = inner.game.window();
    let n = window.dim();
    let m = ((grid_budget as f64).powf(1.0 / n as f64).floor() as usize).clamp(2, 1000);
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = (window.lo[i], window.hi[i]);
        let mut vals: Vec<f64> = (0..m)
            .map(|k| lo + (hi - lo) * (k as f64) / ((m - 1) as f64))
            .collect();
        if let Some(slices) = &inner.slices {
            let blocks = inner.blocks();
            let nu = (0..blocks.players())
                .find(|&p| blocks.range(p).contains(&i))
                .expect("index belongs to a block");
            if let (_, Some((slo, shi))) = &slices[nu] {
                vals.retain(|v| *v >= slo - INNER_MEMBER_TOL && *v <= shi + INNER_MEMBER_TOL);
                for e in [*slo, *shi] {
                    if e.is_finite() && e >= lo - 1e-12 && e <= hi + 1e-12 {
                        vals.push(e);
                    }
                }
            }
        }
        if vals.is_empty() {
            return Ok(None);
        }
        axes.push(vals);
    }
    let mut idx = vec![0usize; n];
    let mut y = vec![0.0; n];
    loop {
        for i in 0..n {
            y[i] = axes[i][idx[i]];
        }
        if inner.admissible(&y)? {
            return Ok(Some(y));
        }
        let mut i = 0;
        loop {
            idx[i] += 1;
            if idx[i] < axes[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
            if i == n {
                return Ok(None);
            }
        }
    }
}

fn random_unit(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        // Box-Muller pairs give an isotropic direction
        let mut v = Vec::with_capacity(n);
        while v.len() < n {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            v.push(r * (std::f64::consts::TAU * u2).cos());
            if v.len() < n {
                v.push(r * (std::f64::consts::TAU * u2).sin());
            }
        }
        let nm = nrm2(&v);
        if nm > 1e-12 {
            return v.iter().map(|x| x / nm).collect();
        }
    }
}

fn project_or_best(
    set: &ConvexSet,
    z: &[f64],
    opts: &ProjectOpts,
) -> Result<Vec<f64>, GeometryError> {
    match set.project(z, opts) {
        Ok(p) => Ok(p),
        Err(GeometryError::NonConvergence { best, .. }) if set.contains(&best, 1e-6) => Ok(best),
        Err(e) => Err(e),
    }
}

/// Alternate projection onto `X` with rescaling to the sphere. Ends on a
/// rescale so `|x| = rho` holds exactly and the strict ball margin cannot
/// be crossed by the candidate itself.
fn polish_to_sphere(
    set: &ConvexSet,
    window: &Window,
    rho: f64,
    start: &[f64],
    rounds: usize,
) -> Option<Vec<f64>> {
    let popts = ProjectOpts::default();
    let mut z = start.to_vec();
    for _ in 0..rounds {
        let p = project_or_best(set, &z, &popts).ok()?;
        let nm = nrm2(&p);
        if nm < 1e-12 {
            return None;
        }
        let next: Vec<f64> = p.iter().map(|v| v * rho / nm).collect();
        let moved = nrm2(&sub(&next, &z));
        z = next;
        if moved < 1e-12 {
            break;
        }
    }
    let ok = set.contains(&z, SPHERE_TOL)
        && (nrm2(&z) - rho).abs() <= SPHERE_TOL
        && window.contains(&z, SPHERE_TOL);
    ok.then_some(z)
}

/// Bisection along the sphere of radius `rho` between a point of `X` that
/// passes exact containment and a point outside. Converges to the
/// boundary crossing of `X` on the sphere with no projector slack, which
/// is where the sphere conditions become critical.
fn arc_bisect(set: &ConvexSet, rho: f64, feasible: &[f64], infeasible: &[f64]) -> Option<Vec<f64>> {
    let mut u = feasible.to_vec();
    let mut v = infeasible.to_vec();
    for _ in 0..100 {
        let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
        let nm = nrm2(&mid);
        if nm < 1e-9 {
            return None;
        }
        let m: Vec<f64> = mid.iter().map(|w| w * rho / nm).collect();
        if set.contains(&m, 0.0) {
            u = m;
        } else {
            v = m;
        }
    }
    Some(u)
}

/// Outer candidates on the sphere slice of `X`: coordinate-pinned probes
/// first, then boundary corners recovered by exact arc bisection, then
/// polished Gaussian directions. The corners matter because polished
/// points carry projector slack on either side of the boundary, while a
/// refutation needs the boundary itself.
fn sphere_candidates(
    game: &RosenGame,
    rho: f64,
    params: &CoerciveParams,
) -> Vec<Vec<f64>> {
    let set = game.set();
    let window = game.window();
    let popts = ProjectOpts::default();
    let n = window.dim();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut push = |z: Vec<f64>, out: &mut Vec<Vec<f64>>| {
        let key: Vec<i64> = z.iter().map(|v| (v * 1e12).round() as i64).collect();
        if seen.insert(key) {
            out.push(z);
        }
    };
    let mut anchors: Vec<Vec<f64>> = Vec::new();
    let mut feasible_exact: Option<Vec<f64>> = None;
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let c = sign * rho;
            if c < window.lo[i] - 1e-9 || c > window.hi[i] + 1e-9 {
                continue;
            }
            let mut e = vec![0.0; n];
            e[i] = c;
            if !set.contains(&e, 1e-9) && window.contains(&e, 1e-9) {
                anchors.push(e.clone());
            }
            if let Some(z) = polish_to_sphere(set, window, rho, &e, 500) {
                if feasible_exact.is_none() && set.contains(&z, 0.0) {
                    feasible_exact = Some(z.clone());
                }
                push(z, &mut out);
            }
        }
    }
    if feasible_exact.is_none() {
        if let Ok(d) = project_or_best(set, &window.center(), &popts) {
            let nm = nrm2(&d);
            if nm > 1e-12 {
                let s: Vec<f64> = d.iter().map(|v| v * rho / nm).collect();
                if set.contains(&s, 0.0) && window.contains(&s, 1e-9) {
                    feasible_exact = Some(s);
                }
            }
        }
    }
    if let Some(u) = &feasible_exact {
        for a in &anchors {
            if let Some(c) = arc_bisect(set, rho, u, a) {
                if window.contains(&c, 1e-9) {
                    push(c, &mut out);
                }
            }
        }
    }
    // Rejection sampling of the sphere slice: exact sphere points kept by
    // membership alone, no projections.
    let mut rng = rng_for(params.seed, "coercive-sphere");
    let mut attempts = 0;
    while out.len() < params.budget && attempts < 4 * params.budget.max(8) {
        attempts += 1;
        let d = random_unit(&mut rng, n);
        let z: Vec<f64> = d.iter().map(|v| v * rho).collect();
        if set.contains(&z, 1e-9) && window.contains(&z, 1e-9) {
            push(z, &mut out);
        }
    }
    out
}

/// Outer candidates in `X` outside the closed ball, inside the window:
/// coordinate-pinned probes with minimum-norm completion, then
/// quasirandom rejection draws.
fn exterior_candidates(
    game: &RosenGame,
    rho: f64,
    params: &CoerciveParams,
) -> Result<Vec<Vec<f64>>, CoerciveError> {
    let set = game.set();
    let window = game.window();
    let n = window.dim();
    // The pinned probes become witnesses, so they must clear the 1e-9
    // membership acceptance; the projector only guarantees an order of
    // magnitude above its tolerance.
    let pin_opts = ProjectOpts { tol: 1e-10, max_iter: 200_000 };
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut push = |z: Vec<f64>, out: &mut Vec<Vec<f64>>| {
        let key: Vec<i64> = z.iter().map(|v| (v * 1e12).round() as i64).collect();
        if seen.insert(key) {
            out.push(z);
        }
    };
    let accept = |z: &[f64]| {
        set.contains(z, 1e-9) && window.contains(z, 1e-9) && nrm2(z) > rho + STRICT_MARGIN
    };
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let c = sign * rho;
            if c < window.lo[i] - 1e-9 || c > window.hi[i] + 1e-9 {
                continue;
            }
            let mut lo = window.lo.clone();
            let mut hi = window.hi.clone();
            lo[i] = c;
            hi[i] = c;
            let pin = match ConvexSet::bbox(lo, hi) {
                Ok(b) => b,
                Err(_) => continue,
            };
            let pinned = match ConvexSet::intersection(vec![set.clone(), pin]) {
                Ok(s) => s,
                Err(_) => continue,
            };
            if let Ok(z) = project_or_best(&pinned, &vec![0.0; n], &pin_opts) {
                if accept(&z) {
                    push(z, &mut out);
                }
            }
        }
    }
    let mut rng = rng_for(params.seed, "coercive-exterior");
    for z in window.halton_points(10 * params.budget, rng.gen()) {
        if out.len() >= params.budget {
            break;
        }
        if accept(&z) {
            push(z, &mut out);
        }
    }
    Ok(out)
}

/// Check one coerciveness condition at radius `rho` by outer sampling and
/// an inner existence search. Refutation requires the witness to survive a
/// lattice with ten times the outer budget.
pub fn check_condition(
    game: &RosenGame,
    which: Condition,
    rho: f64,
    params: &CoerciveParams,
) -> Result<CoerciveVerdict, CoerciveError> {
    if !(rho > 0.0) {
        return Err(CoerciveError::BadRho { got: rho });
    }
    let popts = ProjectOpts::default();
    let origin = vec![0.0; game.dim()];
    let nearest = project_or_best(game.set(), &origin, &popts)?;
    if nrm2(&nearest) > rho + 1e-9 {
        return Ok(CoerciveVerdict {
            condition: which,
            rho,
            verdict: CoerciveOutcome::PreconditionFailed,
            witness: None,
            samples_used: 0,
        });
    }

    let outer = if which.on_sphere() {
        sphere_candidates(game, rho, params)
    } else {
        exterior_candidates(game, rho, params)?
    };

    let mut samples_used = 0;
    for (i, x) in outer.iter().enumerate() {
        samples_used = i + 1;
        let inner = Inner::new(game, which, rho, x)?;
        let seed = params.seed ^ ((i as u64) << 20);
        let scan = inner_search(&inner, params.budget.max(64), seed)?;
        if scan.admissible.is_some() {
            continue;
        }
        if grid_search(&inner, 10 * params.budget.max(64))?.is_some() {
            continue;
        }
        return Ok(CoerciveVerdict {
            condition: which,
            rho,
            verdict: CoerciveOutcome::Refuted,
            witness: Some(CoerciveWitness {
                x: x.clone(),
                best_y: scan.best_y,
                violated: scan.best_clause.describe(),
                violation: scan.best_g,
            }),
            samples_used,
        });
    }

    Ok(CoerciveVerdict {
        condition: which,
        rho,
        verdict: CoerciveOutcome::ConsistentAtBudget,
        witness: None,
        samples_used,
    })
}

/// One implication pair: when `first` holds at its radius, `second` should
/// hold at its own. The anomaly flag marks the combination that the theory
/// rules out.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairAudit {
    pub first: CoerciveVerdict,
    pub second: CoerciveVerdict,
    pub anomaly: bool,
}

/// Informational probe of the rectangle against the ball: the minimum-norm
/// element of `X(x)` decides whether the rectangle meets the rho ball.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RectangleProbe {
    pub x: Vec<f64>,
    pub min_norm_point: Vec<f64>,
    pub norm: f64,
    pub meets_ball: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImplicationReport {
    pub rho: f64,
    /// Item 1 of every condition: X meets the closed rho ball.
    pub item1_ok: bool,
    /// C2 at rho against C1 at 2 rho.
    pub c2_to_c1: PairAudit,
    /// C1 against C0 at the same rho; only sound when X is a product set,
    /// so it runs only under that assertion.
    pub c1_to_c0: Option<PairAudit>,
    pub c1_to_c0_skipped: Option<String>,
    pub rectangle_probes: Vec<RectangleProbe>,
}

/// Cross-check the implication structure between the conditions on one
/// game and record rectangle-versus-ball probes at a few feasible points.
pub fn implication_audit(
    game: &RosenGame,
    rho: f64,
    params: &CoerciveParams,
) -> Result<ImplicationReport, CoerciveError> {
    if !(rho > 0.0) {
        return Err(CoerciveError::BadRho { got: rho });
    }
    let popts = ProjectOpts::default();
    let origin = vec![0.0; game.dim()];
    let item1_ok = nrm2(&project_or_best(game.set(), &origin, &popts)?) <= rho + 1e-9;

    let c2 = check_condition(game, Condition::C2, rho, params)?;
    let c1_double = check_condition(game, Condition::C1, 2.0 * rho, params)?;
    let c2_to_c1 = PairAudit {
        anomaly: c2.verdict == CoerciveOutcome::ConsistentAtBudget
            && c1_double.verdict == CoerciveOutcome::Refuted,
        first: c2,
        second: c1_double,
    };

    let (c1_to_c0, c1_to_c0_skipped) = if game.equals_product() {
        let c1 = check_condition(game, Condition::C1, rho, params)?;
        let c0 = check_condition(game, Condition::C0, rho, params)?;
        let audit = PairAudit {
            anomaly: c1.verdict == CoerciveOutcome::ConsistentAtBudget
                && c0.verdict == CoerciveOutcome::Refuted,
            first: c1,
            second: c0,
        };
        (Some(audit), None)
    } else {
        (None, Some("X≠K".to_string()))
    };

    let window = game.window();
    let mut probe_points: Vec<Vec<f64>> = vec![window.center()];
    probe_points.extend(window.corners().into_iter().take(8));
    let mut rectangle_probes = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for p in probe_points {
        let x = match project_or_best(game.set(), &p, &popts) {
            Ok(x) => x,
            Err(_) => continue,
        };
        let key: Vec<i64> = x.iter().map(|v| (v * 1e7).round() as i64).collect();
        if !seen.insert(key) {
            continue;
        }
        let (min_norm_point, norm) =
            block_rectangle_min_norm(game.set(), game.blocks(), &x, &popts)?;
        rectangle_probes.push(RectangleProbe {
            x,
            min_norm_point,
            norm,
            meets_ball: norm <= rho + 1e-9,
        });
    }

    Ok(ImplicationReport {
        rho,
        item1_ok,
        c2_to_c1,
        c1_to_c0,
        c1_to_c0_skipped,
        rectangle_probes,
    })
}

#[derive(Debug, Clone)]
pub struct UnboundedParams {
    pub rho0: f64,
    pub growth: f64,
    pub max_rounds: usize,
    pub method: SolveMethod,
    /// Certification tolerance against the untruncated game.
    pub verify_tol: f64,
    pub solve: SolveParams,
}

impl Default for UnboundedParams {
    fn default() -> Self {
        UnboundedParams {
            rho0: 1.0,
            growth: 2.0,
            max_rounds: 10,
            method: SolveMethod::Svi,
            verify_tol: crate::nash::VERIFY_TOL,
            solve: SolveParams::default(),
        }
    }
}

/// Truncate-solve-certify loop for unbounded shared sets: solve the game
/// on `X` cut to the ball of radius `rho0 * growth^k` and verify each
/// candidate against the full game. Returns at the first certified point;
/// otherwise the best candidate by regret, flagged unconverged.
pub fn solve_unbounded(
    game: &RosenGame,
    params: &UnboundedParams,
) -> Result<(SolveResult, EquilibriumCertificate), CoerciveError> {
    if !(params.rho0 > 0.0) {
        return Err(CoerciveError::BadRho { got: params.rho0 });
    }
    let popts = ProjectOpts::default();
    let origin = vec![0.0; game.dim()];
    let min_norm = nrm2(&project_or_best(game.set(), &origin, &popts)?);
    if min_norm > params.rho0 + 1e-7 {
        return Err(CoerciveError::Precondition { rho: params.rho0, min_norm });
    }

    let blocks = game.blocks().clone();
    let objectives: Vec<_> = (0..game.players()).map(|nu| game.objective(nu).clone()).collect();
    let labels: Vec<String> = (0..game.players()).map(|nu| game.label(nu).to_string()).collect();
    let br = BrParams { seed: params.solve.seed, ..BrParams::default() };

    let mut trace = Vec::with_capacity(params.max_rounds);
    let mut best: Option<(SolveResult, EquilibriumCertificate)> = None;
    for round in 0..params.max_rounds {
        let rho = params.rho0 * params.growth.powi(round as i32);
        let ball = ConvexSet::ball(origin.clone(), rho, crate::geometry::NormKind::L2)?;
        let truncated = ConvexSet::intersection(vec![game.set().clone(), ball])?;
        let trunc_game = RosenGame::new(
            blocks.clone(),
            truncated,
            objectives.clone(),
            game.window().clone(),
            Some(labels.clone()),
        )?;
        let (round_result, _) = solve(&trunc_game, params.method, &params.solve)?;
        let cert = verify_equilibrium(game, &round_result.point, params.verify_tol, &br)?;
        trace.push(cert.max_regret());
        if cert.verdict == Verdict::Certified {
            let out = SolveResult {
                iterations: round + 1,
                method: format!("unbounded-{}", params.method.label()),
                converged: true,
                residual: cert.max_regret(),
                trace: Some(trace),
                ..round_result
            };
            return Ok((out, cert));
        }
        let replace = match &best {
            None => true,
            Some((_, b)) => cert.max_regret() < b.max_regret(),
        };
        if replace {
            best = Some((round_result, cert));
        }
    }
    let (res, cert) = best.expect("max_rounds is positive");
    let out = SolveResult {
        iterations: params.max_rounds,
        method: format!("unbounded-{}", params.method.label()),
        converged: false,
        residual: cert.max_regret(),
        trace: Some(trace),
        ..res
    };
    Ok((out, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testgames::{
        aad_game, drift_game, hyperbola_game, orthant_target_game, random_convex_game, wedge_game,
    };

    const ROOT8: f64 = 2.8284271247461903;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn c3_refutes_the_hyperbola_at_the_pinned_witness() {
        let game = hyperbola_game();
        let params = CoerciveParams { budget: 800, seed: 42 };
        let v = check_condition(&game, Condition::C3, ROOT8, &params).unwrap();
        assert_eq!(v.verdict, CoerciveOutcome::Refuted);
        let w = v.witness.expect("refutation carries a witness");
        assert!(
            close(&w.x, &[ROOT8, 2.0_f64.sqrt() / 4.0], 1e-6),
            "witness {:?}",
            w.x
        );
        assert!(w.violation > 0.0);
        assert_eq!(v.samples_used, 1);
    }

    #[test]
    fn c0_refutes_the_hyperbola_corner() {
        let game = hyperbola_game();
        let params = CoerciveParams { budget: 800, seed: 42 };
        let v = check_condition(&game, Condition::C0, ROOT8, &params).unwrap();
        assert_eq!(v.verdict, CoerciveOutcome::Refuted);
        let w = v.witness.expect("refutation carries a witness");
        let corner = [(4.0 + 15.0_f64.sqrt()).sqrt(), 1.0 / (4.0 + 15.0_f64.sqrt()).sqrt()];
        assert!(close(&w.x, &corner, 1e-3), "witness {:?} corner {:?}", w.x, corner);
    }

    #[test]
    fn c1_refutes_the_triangle_at_a_pinned_pole() {
        let game = aad_game();
        let params = CoerciveParams { budget: 400, seed: 42 };
        let v = check_condition(&game, Condition::C1, 0.9, &params).unwrap();
        assert_eq!(v.verdict, CoerciveOutcome::Refuted);
        let w = v.witness.expect("refutation carries a witness");
        assert!(close(&w.x, &[0.0, 0.9], 1e-6), "witness {:?}", w.x);
        assert!(w.violation > 0.0);
    }

    #[test]
    fn c2_holds_for_the_orthant_game_within_the_window() {
        let game = orthant_target_game();
        let params = CoerciveParams { budget: 600, seed: 42 };
        let v = check_condition(&game, Condition::C2, 8.0, &params).unwrap();
        assert_eq!(v.verdict, CoerciveOutcome::ConsistentAtBudget);
        assert!(v.samples_used >= 1, "the window corner region is nonempty");
    }

    #[test]
    fn c0_is_vacuously_consistent_past_the_set_radius() {
        let game = aad_game();
        let params = CoerciveParams { budget: 200, seed: 42 };
        let v = check_condition(&game, Condition::C0, 2.0, &params).unwrap();
        assert_eq!(v.verdict, CoerciveOutcome::ConsistentAtBudget);
        assert_eq!(v.samples_used, 0, "no sphere point lies in the set");
    }

    #[test]
    fn the_precondition_fails_when_the_ball_misses_the_set() {
        let set = ConvexSet::bbox(vec![5.0, 5.0], vec![6.0, 6.0]).unwrap();
        let game = RosenGame::new(
            BlockStructure::new(vec![1, 1]),
            set,
            vec![
                crate::expr::parse("x1^2", 2).unwrap(),
                crate::expr::parse("x2^2", 2).unwrap(),
            ],
            Window::new(vec![5.0, 5.0], vec![6.0, 6.0]),
            None,
        )
        .unwrap();
        let v = check_condition(&game, Condition::C2, 1.0, &CoerciveParams::default()).unwrap();
        assert_eq!(v.verdict, CoerciveOutcome::PreconditionFailed);
        assert_eq!(v.samples_used, 0);
    }

    #[test]
    fn refutation_survives_a_tenfold_budget() {
        let game = hyperbola_game();
        let small = check_condition(
            &game,
            Condition::C3,
            ROOT8,
            &CoerciveParams { budget: 600, seed: 42 },
        )
        .unwrap();
        let large = check_condition(
            &game,
            Condition::C3,
            ROOT8,
            &CoerciveParams { budget: 6000, seed: 42 },
        )
        .unwrap();
        assert_eq!(small.verdict, CoerciveOutcome::Refuted);
        assert_eq!(large.verdict, CoerciveOutcome::Refuted);
        let (a, b) = (small.witness.unwrap(), large.witness.unwrap());
        assert!(close(&a.x, &b.x, 1e-9), "{:?} vs {:?}", a.x, b.x);
    }

    #[test]
    fn the_audit_skips_the_product_implication_for_the_hyperbola() {
        let game = hyperbola_game();
        let params = CoerciveParams { budget: 300, seed: 42 };
        let report = implication_audit(&game, ROOT8, &params).unwrap();
        assert!(report.item1_ok);
        assert!(report.c1_to_c0.is_none());
        assert_eq!(report.c1_to_c0_skipped.as_deref(), Some("X≠K"));
        assert!(!report.c2_to_c1.anomaly);
    }

    #[test]
    fn the_audit_records_the_wedge_rectangle_probe() {
        let game = wedge_game();
        let params = CoerciveParams { budget: 300, seed: 42 };
        let report = implication_audit(&game, 1.0, &params).unwrap();
        assert!(report.item1_ok);
        let probe = report
            .rectangle_probes
            .iter()
            .find(|p| close(&p.x, &[2.0, 2.0], 1e-7))
            .expect("window center probe present");
        assert!(close(&probe.min_norm_point, &[0.0, 2.0], 1e-6));
        assert!((probe.norm - 2.0).abs() <= 1e-6);
        assert!(!probe.meets_ball);
    }

    #[test]
    fn the_audit_finds_no_anomaly_on_random_convex_games() {
        for k in 0..2 {
            let game = random_convex_game(k);
            let params = CoerciveParams { budget: 200, seed: 42 };
            let report = implication_audit(&game, 4.0, &params).unwrap();
            assert!(!report.c2_to_c1.anomaly, "game {k}");
            if let Some(audit) = &report.c1_to_c0 {
                assert!(!audit.anomaly, "game {k}");
            }
        }
    }

    #[test]
    fn unbounded_solve_lands_on_the_interior_target() {
        let game = orthant_target_game();
        let (res, cert) = solve_unbounded(&game, &UnboundedParams::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 3, "rho schedule 1, 2, 4");
        assert_eq!(cert.verdict, crate::nash::Verdict::Certified);
        assert!(close(&res.point, &[2.0, 2.0], 1e-5), "point {:?}", res.point);
    }

    #[test]
    fn unbounded_solve_exhausts_on_a_drifting_game() {
        let game = drift_game();
        let params = UnboundedParams { max_rounds: 3, ..UnboundedParams::default() };
        let (res, cert) = solve_unbounded(&game, &params).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 3);
        assert_ne!(cert.verdict, crate::nash::Verdict::Certified);
        let trace = res.trace.expect("per round regrets recorded");
        assert_eq!(trace.len(), 3);
        assert!(trace.iter().all(|r| *r > 1.0), "regrets {:?}", trace);
    }

    #[test]
    fn unbounded_solve_degenerates_on_a_bounded_set() {
        let game = aad_game();
        let params = UnboundedParams { rho0: 10.0, ..UnboundedParams::default() };
        let (res, cert) = solve_unbounded(&game, &params).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert_eq!(cert.verdict, crate::nash::Verdict::Certified);
        let x = &res.point;
        assert!((2.0 * x[0] + x[1] - 1.0).abs() <= 1e-6, "point {:?}", x);
    }

    #[test]
    fn unbounded_solve_rejects_a_small_initial_ball() {
        let game = hyperbola_game();
        let params = UnboundedParams { rho0: 1.0, ..UnboundedParams::default() };
        match solve_unbounded(&game, &params) {
            Err(CoerciveError::Precondition { min_norm, .. }) => {
                // the projector certifies the distance to curved sets only
                // to about 1e-4, which is ample for a gate at rho0 = 1
                assert!((min_norm - 2.0_f64.sqrt()).abs() <= 1e-3, "min norm {min_norm}");
            }
            other => panic!("expected a precondition error, got {other:?}"),
        }
    }
}

