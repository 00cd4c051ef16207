//! Shared minimization helpers used by best responses, the reduction
//! solver and the coercive inner searches.
//!
//! Two complementary passes: projected gradient with backtracking for the
//! smooth descent path, and golden-section along feasible segments for
//! plateaus and kinks where gradients carry no information. Both work
//! against anything that can project and answer membership queries.

use crate::geometry::{ConvexSet, GeometryError, ProjectOpts, SliceSet};
use crate::sampling::{rng_for, Window};
use rand::Rng;

pub(crate) trait Feasible {
    fn fdim(&self) -> usize;
    fn fproject(&self, y: &[f64], opts: &ProjectOpts) -> Result<Vec<f64>, GeometryError>;
    fn fcontains(&self, y: &[f64], tol: f64) -> bool;
}

impl Feasible for ConvexSet {
    fn fdim(&self) -> usize {
        self.dim()
    }
    fn fproject(&self, y: &[f64], opts: &ProjectOpts) -> Result<Vec<f64>, GeometryError> {
        self.project(y, opts)
    }
    fn fcontains(&self, y: &[f64], tol: f64) -> bool {
        self.contains(y, tol)
    }
}

impl Feasible for SliceSet {
    fn fdim(&self) -> usize {
        self.block_dim()
    }
    fn fproject(&self, y: &[f64], opts: &ProjectOpts) -> Result<Vec<f64>, GeometryError> {
        self.project(y, opts)
    }
    fn fcontains(&self, y: &[f64], tol: f64) -> bool {
        self.contains(y, tol)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct MinimizeOpts {
    pub pg_iters: usize,
    pub segment_rounds: usize,
    pub step_tol: f64,
}

impl Default for MinimizeOpts {
    fn default() -> Self {
        MinimizeOpts { pg_iters: 300, segment_rounds: 12, step_tol: 1e-11 }
    }
}

/// Local minimization from one feasible start. `f` returns `None` on
/// domain errors, which the search treats as forbidden territory.
/// Returns the best point found and its value.
pub(crate) fn minimize_local(
    f: &dyn Fn(&[f64]) -> Option<f64>,
    grad: &dyn Fn(&[f64]) -> Option<Vec<f64>>,
    target: &dyn Feasible,
    window: &Window,
    start: &[f64],
    seed: u64,
    mo: &MinimizeOpts,
) -> Option<(Vec<f64>, f64)> {
    let popts = ProjectOpts::default();
    let mut x = start.to_vec();
    let mut fx = f(&x)?;
    let span = window_span(window);

    // descent pass
    let mut t = 0.0;
    for _ in 0..mo.pg_iters {
        let g = match grad(&x) {
            Some(g) => g,
            None => break,
        };
        let gn = nrm(&g);
        if gn <= 1e-14 {
            break;
        }
        if t == 0.0 {
            t = 0.25 * span / gn.max(1e-12);
        }
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(v, gi)| v - t * gi).collect();
            let p = match target.fproject(&trial, &popts) {
                Ok(p) => p,
                Err(_) => break,
            };
            match f(&p) {
                Some(fp) if fp < fx - 1e-15 => {
                    let moved = dist(&p, &x);
                    x = p;
                    fx = fp;
                    t *= 1.3;
                    accepted = true;
                    if moved <= mo.step_tol {
                        return polish_by_segments(f, target, window, x, fx, seed, mo);
                    }
                    break;
                }
                _ => t *= 0.5,
            }
            if t * gn < mo.step_tol {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    polish_by_segments(f, target, window, x, fx, seed, mo)
}

/// Golden-section refinement along feasible segments: the coordinate axes
/// first (plateau escapes), then seeded random directions.
fn polish_by_segments(
    f: &dyn Fn(&[f64]) -> Option<f64>,
    target: &dyn Feasible,
    window: &Window,
    mut x: Vec<f64>,
    mut fx: f64,
    seed: u64,
    mo: &MinimizeOpts,
) -> Option<(Vec<f64>, f64)> {
    let d = target.fdim();
    let span = window_span(window);
    let mut rng = rng_for(seed, "segment-polish");
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        dirs.push(e);
    }
    for _ in 0..mo.segment_rounds {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = nrm(&v);
        if n > 1e-9 {
            dirs.push(v.iter().map(|t| t / n).collect());
        }
    }
    for dir in &dirs {
        let (lo, hi) = feasible_range(target, &x, dir, span);
        if hi - lo <= 1e-13 {
            continue;
        }
        let line = |t: f64| {
            let p: Vec<f64> = x.iter().zip(dir).map(|(v, w)| v + t * w).collect();
            f(&p).unwrap_or(f64::INFINITY)
        };
        let t_best = crate::geometry::golden_min(&line, lo, hi, 120);
        let cand: Vec<f64> = x.iter().zip(dir).map(|(v, w)| v + t_best * w).collect();
        if let Some(fc) = f(&cand) {
            if fc < fx - 1e-15 && target.fcontains(&cand, 1e-7) {
                x = cand;
                fx = fc;
            }
        }
    }
    Some((x, fx))
}

/// Feasible parameter range of `x + t dir` found by doubling expansion and
/// bisection against membership, starting from the feasible t = 0.
fn feasible_range(target: &dyn Feasible, x: &[f64], dir: &[f64], span: f64) -> (f64, f64) {
    let member = |t: f64| {
        let p: Vec<f64> = x.iter().zip(dir).map(|(v, w)| v + t * w).collect();
        target.fcontains(&p, 1e-9)
    };
    if !member(0.0) {
        return (0.0, 0.0);
    }
    let cap = 4.0 * span;
    let one_side = |sign: f64| -> f64 {
        let mut inside = 0.0_f64;
        let mut step = 1e-3 * span;
        while member(inside + sign * step) {
            inside += sign * step;
            step *= 2.0;
            if inside.abs() >= cap {
                return inside;
            }
        }
        let mut outside = inside + sign * step;
        for _ in 0..60 {
            let mid = 0.5 * (inside + outside);
            if member(mid) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };
    (one_side(-1.0), one_side(1.0))
}

pub(crate) fn window_span(window: &Window) -> f64 {
    window.spans().iter().fold(1e-6, |m, s| m.max(*s))
}

pub(crate) fn nrm(v: &[f64]) -> f64 {
    v.iter().map(|t| t * t).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Strictly-less-than over vectors, lexicographic with a value tie first.
/// Used to pick deterministic argmins among near-equal candidates.
pub(crate) fn better(cand: (&[f64], f64), incumbent: (&[f64], f64), value_tie: f64) -> bool {
    if cand.1 < incumbent.1 - value_tie {
        return true;
    }
    if cand.1 > incumbent.1 + value_tie {
        return false;
    }
    for (c, i) in cand.0.iter().zip(incumbent.0) {
        if c < i {
            return true;
        }
        if c > i {
            return false;
        }
    }
    false
}
