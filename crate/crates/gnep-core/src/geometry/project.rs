//! Projection algorithms behind [`ConvexSet::project`] and slice projection.
//!
//! Closed forms: boxes, balls (l1 via the sorted soft-threshold), single
//! halfspaces. Hulls use the minimum-norm-point method over the shifted
//! vertices, which terminates finitely. Polyhedra and intersections run
//! cyclic Dykstra. Sublevel sets grow supporting-hyperplane cuts through
//! boundary points found by bisection toward the stored interior point;
//! the polyhedral relaxation also yields a lower bound on the distance, so
//! the returned point carries a certified optimality gap.
//!
//! One-dimensional slices avoid Dykstra entirely: along the pinned line
//! every violation measure is quasi-convex, so golden-section plus
//! bisection recovers the feasible interval to near machine precision even
//! when it degenerates to a single point.

use nalgebra::DMatrix;

use super::{dot, nrm2, sub, ConvexSet, GeometryError, NormKind, SliceSet, MEMBER_TOL};

#[derive(Debug, Clone)]
pub struct ProjectOpts {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProjectOpts {
    fn default() -> Self {
        ProjectOpts { tol: 1e-8, max_iter: 100_000 }
    }
}

const BIG: f64 = 1e30;

/// Scaled constraint violation: <= 0 (up to roundoff) inside the set,
/// positive outside, quasi-convex along any line when every sublevel
/// function is quasi-convex. Evaluation failures count as far outside.
pub(crate) fn violation(set: &ConvexSet, x: &[f64]) -> f64 {
    match set {
        ConvexSet::Box { lo, hi } => x
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(v, (a, b))| (a - v).max(v - b))
            .fold(f64::NEG_INFINITY, f64::max),
        ConvexSet::Polyhedron { a, b } => a
            .iter()
            .zip(b)
            .map(|(row, bi)| (dot(row, x) - bi) / 1.0_f64.max(nrm2(row)))
            .fold(f64::NEG_INFINITY, f64::max),
        ConvexSet::Ball { center, radius, norm } => {
            norm.eval(&sub(x, center)) - radius
        }
        ConvexSet::Hull { points } => hull_distance(points, x),
        ConvexSet::Sublevel { g, c, .. } => match g.eval(x) {
            Ok(v) => v - c,
            Err(_) => BIG,
        },
        ConvexSet::Intersection { members } => members
            .iter()
            .map(|m| violation(m, x))
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

pub(crate) fn project(
    set: &ConvexSet,
    x: &[f64],
    opts: &ProjectOpts,
) -> Result<Vec<f64>, GeometryError> {
    match set {
        ConvexSet::Box { lo, hi } => Ok(clamp_box(x, lo, hi)),
        ConvexSet::Ball { center, radius, norm } => Ok(project_ball(x, center, *radius, *norm)),
        ConvexSet::Polyhedron { a, b } => project_polyhedron(a, b, x, opts),
        ConvexSet::Hull { points } => Ok(project_hull(points, x)),
        ConvexSet::Sublevel { g: _, c: _, interior: _ } => project_sublevel(set, x, opts),
        ConvexSet::Intersection { members } => {
            let projectors: Vec<Projector> = members
                .iter()
                .map(|m| {
                    let m = m.clone();
                    Box::new(move |p: &[f64], o: &ProjectOpts| project(&m, p, o)) as Projector
                })
                .collect();
            let inside = |p: &[f64]| violation(set, p) <= 10.0 * opts.tol;
            dykstra(x, &projectors, &inside, opts)
        }
    }
}

fn clamp_box(x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(lo.iter().zip(hi))
        .map(|(v, (a, b))| v.max(*a).min(*b))
        .collect()
}

fn project_ball(x: &[f64], center: &[f64], radius: f64, norm: NormKind) -> Vec<f64> {
    let d = sub(x, center);
    match norm {
        NormKind::L2 => {
            let n = nrm2(&d);
            if n <= radius {
                x.to_vec()
            } else {
                center.iter().zip(&d).map(|(c, t)| c + t * radius / n).collect()
            }
        }
        NormKind::Linf => {
            let lo: Vec<f64> = center.iter().map(|c| c - radius).collect();
            let hi: Vec<f64> = center.iter().map(|c| c + radius).collect();
            clamp_box(x, &lo, &hi)
        }
        NormKind::L1 => {
            let y = project_l1_ball(&d, radius);
            center.iter().zip(&y).map(|(c, t)| c + t).collect()
        }
    }
}

/// Euclidean projection onto `{ v : ||v||_1 <= r }` by soft thresholding
/// with the exact pivot from the sorted magnitudes.
fn project_l1_ball(v: &[f64], r: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|t| t.abs()).sum();
    if l1 <= r {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|t| t.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut lambda = 0.0;
    for (j, m) in mags.iter().enumerate() {
        cum += m;
        let cand = (cum - r) / (j + 1) as f64;
        if m - cand > 0.0 {
            lambda = cand;
        } else {
            break;
        }
    }
    v.iter()
        .map(|t| t.signum() * (t.abs() - lambda).max(0.0))
        .collect()
}

fn project_halfspace(a: &[f64], b: f64, x: &[f64]) -> Vec<f64> {
    let viol = dot(a, x) - b;
    if viol <= 0.0 {
        return x.to_vec();
    }
    let nn = dot(a, a);
    x.iter().zip(a).map(|(v, ai)| v - viol * ai / nn).collect()
}

fn project_polyhedron(
    a: &[Vec<f64>],
    b: &[f64],
    x: &[f64],
    opts: &ProjectOpts,
) -> Result<Vec<f64>, GeometryError> {
    let violated: Vec<usize> = a
        .iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (row, bi))| dot(row, x) - *bi > 0.0)
        .map(|(i, _)| i)
        .collect();
    match violated.len() {
        0 => Ok(x.to_vec()),
        1 => {
            let i = violated[0];
            let p = project_halfspace(&a[i], b[i], x);
            // The halfspace step can leave another row violated.
            if a.iter().zip(b).all(|(row, bi)| dot(row, &p) - bi <= opts.tol) {
                Ok(p)
            } else {
                dykstra_halfspaces(a, b, x, opts)
            }
        }
        _ => dykstra_halfspaces(a, b, x, opts),
    }
}

fn dykstra_halfspaces(
    a: &[Vec<f64>],
    b: &[f64],
    x: &[f64],
    opts: &ProjectOpts,
) -> Result<Vec<f64>, GeometryError> {
    let m = a.len();
    let mut cur = x.to_vec();
    let mut corr = vec![vec![0.0; x.len()]; m];
    let mut iters = 0;
    loop {
        let mut moved = 0.0_f64;
        for i in 0..m {
            let shifted: Vec<f64> = cur.iter().zip(&corr[i]).map(|(u, v)| u + v).collect();
            let y = project_halfspace(&a[i], b[i], &shifted);
            for k in 0..cur.len() {
                corr[i][k] = shifted[k] - y[k];
            }
            moved = moved.max(nrm2(&sub(&y, &cur)));
            cur = y;
            iters += 1;
        }
        let feasible = a
            .iter()
            .zip(b)
            .all(|(row, bi)| dot(row, &cur) - bi <= 10.0 * opts.tol * 1.0_f64.max(nrm2(row)));
        if moved <= 0.1 * opts.tol && feasible {
            return Ok(cur);
        }
        if iters >= opts.max_iter {
            let residual = violation(&ConvexSet::Polyhedron { a: a.to_vec(), b: b.to_vec() }, &cur)
                .max(moved);
            return Err(GeometryError::NonConvergence { residual, iters, best: cur });
        }
    }
}

type Projector = Box<dyn Fn(&[f64], &ProjectOpts) -> Result<Vec<f64>, GeometryError>>;

/// Boyle-Dykstra over arbitrary member projectors.
fn dykstra(
    x: &[f64],
    projectors: &[Projector],
    inside: &dyn Fn(&[f64]) -> bool,
    opts: &ProjectOpts,
) -> Result<Vec<f64>, GeometryError> {
    if projectors.len() == 1 {
        return projectors[0](x, opts);
    }
    let inner = ProjectOpts { tol: opts.tol, max_iter: opts.max_iter / 10 + 100 };
    let mut cur = x.to_vec();
    let mut corr = vec![vec![0.0; x.len()]; projectors.len()];
    let cycles = (opts.max_iter / projectors.len()).clamp(50, 20_000);
    let mut best = cur.clone();
    let mut best_viol = f64::INFINITY;
    for _ in 0..cycles {
        let mut moved = 0.0_f64;
        for (i, proj) in projectors.iter().enumerate() {
            let shifted: Vec<f64> = cur.iter().zip(&corr[i]).map(|(u, v)| u + v).collect();
            let y = proj(&shifted, &inner)?;
            for k in 0..cur.len() {
                corr[i][k] = shifted[k] - y[k];
            }
            moved = moved.max(nrm2(&sub(&y, &cur)));
            cur = y;
        }
        if inside(&cur) {
            if moved <= 0.1 * opts.tol {
                return Ok(cur);
            }
            best = cur.clone();
            best_viol = 0.0;
        } else if moved < best_viol {
            best_viol = moved;
            best = cur.clone();
        }
    }
    if inside(&best) {
        return Ok(best);
    }
    Err(GeometryError::NonConvergence {
        residual: best_viol,
        iters: opts.max_iter,
        best,
    })
}

/// Distance from `x` to the convex hull of `points`.
pub(crate) fn hull_distance(points: &[Vec<f64>], x: &[f64]) -> f64 {
    let (_, d) = min_norm_point(points, x);
    d
}

fn project_hull(points: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let (p, _) = min_norm_point(points, x);
    p
}

/// Minimum-norm point of `conv{p_i - x}`, mapped back to original
/// coordinates. Finite active-set iteration over the combination weights.
pub(crate) fn min_norm_point(points: &[Vec<f64>], x: &[f64]) -> (Vec<f64>, f64) {
    let vs: Vec<Vec<f64>> = points.iter().map(|p| sub(p, x)).collect();
    let scale = vs.iter().map(|v| nrm2(v)).fold(1.0, f64::max);
    let eps = 1e-12 * scale * scale;

    let start = vs
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| dot(a, a).partial_cmp(&dot(b, b)).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let mut support = vec![start];
    let mut weights = vec![1.0_f64];
    let mut z = vs[start].clone();

    for _ in 0..(20 * points.len() + 50) {
        let zz = dot(&z, &z);
        let (j, m) = vs
            .iter()
            .enumerate()
            .map(|(i, v)| (i, dot(&z, v)))
            .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .unwrap();
        if m >= zz - eps || support.contains(&j) {
            break;
        }
        support.push(j);
        weights.push(0.0);

        // Minor cycle: pull the affine minimizer back into the simplex.
        for _ in 0..(support.len() * 4 + 8) {
            let u = match affine_min_norm(&vs, &support) {
                Some(u) => u,
                None => break,
            };
            if u.iter().all(|t| *t >= -1e-12) {
                weights = u;
                break;
            }
            let mut theta: f64 = 1.0;
            for (w, t) in weights.iter().zip(&u) {
                if *t < -1e-12 {
                    theta = theta.min(w / (w - t));
                }
            }
            for (w, t) in weights.iter_mut().zip(&u) {
                *w += theta * (t - *w);
                if *w < 1e-12 {
                    *w = 0.0;
                }
            }
            let kept: Vec<usize> = (0..support.len()).filter(|k| weights[*k] > 0.0).collect();
            if kept.len() == support.len() {
                // theta step did not free a vertex; accept clamped weights
                break;
            }
            support = kept.iter().map(|k| support[*k]).collect();
            weights = kept.iter().map(|k| weights[*k]).collect();
        }
        let total: f64 = weights.iter().sum();
        z = vec![0.0; x.len()];
        for (w, i) in weights.iter().zip(&support) {
            for k in 0..z.len() {
                z[k] += w / total * vs[*i][k];
            }
        }
    }
    let p: Vec<f64> = x.iter().zip(&z).map(|(u, v)| u + v).collect();
    let d = nrm2(&z);
    (p, d)
}

/// Weights solving `min || sum u_i v_i ||` with `sum u_i = 1` over the
/// support, via the bordered Gram system.
fn affine_min_norm(vs: &[Vec<f64>], support: &[usize]) -> Option<Vec<f64>> {
    let k = support.len();
    let mut m = DMatrix::zeros(k + 1, k + 1);
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            m[(r, c)] = 2.0 * dot(&vs[i], &vs[j]);
        }
        m[(r, k)] = 1.0;
        m[(k, r)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = m.clone().lu().solve(&rhs).or_else(|| {
        m.svd(true, true).solve(&rhs, 1e-12).ok()
    })?;
    Some(sol.iter().take(k).copied().collect())
}

fn project_sublevel(
    set: &ConvexSet,
    x: &[f64],
    opts: &ProjectOpts,
) -> Result<Vec<f64>, GeometryError> {
    let (g, c, interior) = match set {
        ConvexSet::Sublevel { g, c, interior } => (g, *c, interior),
        _ => unreachable!(),
    };
    let feasible = |p: &[f64]| matches!(g.eval(p), Ok(v) if v <= c + 1e-12);
    if feasible(x) {
        return Ok(x.to_vec());
    }

    let mut cuts_a: Vec<Vec<f64>> = Vec::new();
    let mut cuts_b: Vec<f64> = Vec::new();
    let mut p = x.to_vec();
    let mut best: Option<Vec<f64>> = None;
    let mut lower = 0.0_f64; // distance to the polyhedral relaxation

    for _ in 0..120 {
        if feasible(&p) {
            // p solves the relaxation and is feasible, hence optimal.
            return Ok(p);
        }
        let z = bisect_boundary(&feasible, interior, &p);
        let improved = match &best {
            Some(b) => nrm2(&sub(&z, x)) < nrm2(&sub(b, x)),
            None => true,
        };
        if improved {
            best = Some(z.clone());
        }
        let grad = match g.grad_full(&z) {
            Ok(gr) => gr.d,
            Err(_) => break,
        };
        let gn = nrm2(&grad);
        if gn < 1e-12 {
            break; // flat spot: no usable supporting hyperplane
        }
        cuts_a.push(grad.clone());
        cuts_b.push(dot(&grad, &z));
        let relax =
            ProjectOpts { tol: (0.01 * opts.tol).max(1e-12), max_iter: opts.max_iter / 4 + 1000 };
        p = match project_polyhedron(&cuts_a, &cuts_b, x, &relax) {
            Ok(q) => q,
            Err(GeometryError::NonConvergence { best: q, .. }) => q,
            Err(e) => return Err(e),
        };
        lower = nrm2(&sub(&p, x));
        if let Some(b) = &best {
            if nrm2(&sub(b, x)) - lower <= opts.tol {
                return Ok(b.clone());
            }
        }
    }
    match best {
        Some(b) => {
            let gap = nrm2(&sub(&b, x)) - lower;
            if gap <= 1e-6 * (1.0 + nrm2(&sub(&b, x))) {
                Ok(b)
            } else {
                Err(GeometryError::NonConvergence { residual: gap, iters: 120, best: b })
            }
        }
        None => Err(GeometryError::NonConvergence {
            residual: f64::INFINITY,
            iters: 120,
            best: p,
        }),
    }
}

/// Boundary point between a feasible and an infeasible end of a segment.
/// Returns the feasible iterate, accurate to ~1e-15 relative.
fn bisect_boundary(feasible: &dyn Fn(&[f64]) -> bool, inside: &[f64], outside: &[f64]) -> Vec<f64> {
    let mut a = 0.0_f64; // feasible parameter (at `inside`)
    let mut b = 1.0_f64;
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        let pt: Vec<f64> = inside
            .iter()
            .zip(outside)
            .map(|(u, v)| u + mid * (v - u))
            .collect();
        if feasible(&pt) {
            a = mid;
        } else {
            b = mid;
        }
    }
    inside
        .iter()
        .zip(outside)
        .map(|(u, v)| u + a * (v - u))
        .collect()
}

// ---------------------------------------------------------------------------
// Slice projection
// ---------------------------------------------------------------------------

pub(crate) fn project_slice(
    slice: &SliceSet,
    y: &[f64],
    opts: &ProjectOpts,
) -> Result<Vec<f64>, GeometryError> {
    let (parent, blocks, nu, _anchor) = slice.parts();
    let r = blocks.range(nu);
    match parent {
        ConvexSet::Box { lo, hi } => Ok(clamp_box(y, &lo[r.clone()], &hi[r])),
        ConvexSet::Ball { .. } => project_slice_ball(slice, y),
        ConvexSet::Polyhedron { .. } => {
            let (a, b) = materialize_polyhedron_slice(slice)?;
            if a.is_empty() {
                Ok(y.to_vec())
            } else {
                project_polyhedron(&a, &b, y, opts)
            }
        }
        _ if r.len() == 1 => {
            let (lo, hi) = numeric_interval(slice)?;
            Ok(vec![y[0].max(lo).min(hi)])
        }
        ConvexSet::Intersection { members } => {
            if members.iter().all(slice_member_simple) {
                let projectors: Vec<Projector> = members
                    .iter()
                    .map(|m| {
                        let ms = SliceSet {
                            parent: m.clone(),
                            blocks: blocks.clone(),
                            nu,
                            anchor: slice.parts().3.to_vec(),
                        };
                        Box::new(move |p: &[f64], o: &ProjectOpts| project_slice(&ms, p, o))
                            as Projector
                    })
                    .collect();
                let s2 = slice.clone();
                let inside = move |p: &[f64]| s2.contains(p, 1e-7);
                dykstra(y, &projectors, &inside, opts)
            } else {
                project_slice_ambient(slice, y, opts)
            }
        }
        _ => project_slice_ambient(slice, y, opts),
    }
}

fn slice_member_simple(m: &ConvexSet) -> bool {
    matches!(
        m,
        ConvexSet::Box { .. } | ConvexSet::Ball { .. } | ConvexSet::Polyhedron { .. }
    )
}

fn project_slice_ball(slice: &SliceSet, y: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let (parent, blocks, nu, anchor) = slice.parts();
    let (center, radius, norm) = match parent {
        ConvexSet::Ball { center, radius, norm } => (center, *radius, *norm),
        _ => unreachable!(),
    };
    let r = blocks.range(nu);
    let c_block = &center[r.clone()];
    let mut off = 0.0;
    match norm {
        NormKind::L2 => {
            for i in 0..blocks.dim() {
                if !r.contains(&i) {
                    off += (anchor[i] - center[i]).powi(2);
                }
            }
            let rest = radius * radius - off;
            if rest < -MEMBER_TOL {
                return Err(GeometryError::EmptySlice { player: nu });
            }
            Ok(project_ball(y, c_block, rest.max(0.0).sqrt(), NormKind::L2))
        }
        NormKind::L1 => {
            for i in 0..blocks.dim() {
                if !r.contains(&i) {
                    off += (anchor[i] - center[i]).abs();
                }
            }
            let rest = radius - off;
            if rest < -MEMBER_TOL {
                return Err(GeometryError::EmptySlice { player: nu });
            }
            Ok(project_ball(y, c_block, rest.max(1e-300), NormKind::L1))
        }
        NormKind::Linf => {
            for i in 0..blocks.dim() {
                if !r.contains(&i) {
                    off = off.max((anchor[i] - center[i]).abs());
                }
            }
            if off > radius + MEMBER_TOL {
                return Err(GeometryError::EmptySlice { player: nu });
            }
            Ok(project_ball(y, c_block, radius, NormKind::Linf))
        }
    }
}

/// Block-space rows of a polyhedral slice. Rows without block support must
/// already be satisfied by the frozen rivals, otherwise the slice is empty.
fn materialize_polyhedron_slice(
    slice: &SliceSet,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), GeometryError> {
    let (parent, blocks, nu, anchor) = slice.parts();
    let (a, b) = match parent {
        ConvexSet::Polyhedron { a, b } => (a, b),
        _ => unreachable!(),
    };
    let r = blocks.range(nu);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (row, bi) in a.iter().zip(b) {
        let block_part: Vec<f64> = r.clone().map(|i| row[i]).collect();
        let mut fixed = 0.0;
        for i in 0..blocks.dim() {
            if !r.contains(&i) {
                fixed += row[i] * anchor[i];
            }
        }
        let scale = 1.0_f64.max(nrm2(row));
        if nrm2(&block_part) <= 1e-14 * scale {
            if fixed - bi > MEMBER_TOL * scale {
                return Err(GeometryError::EmptySlice { player: nu });
            }
        } else {
            rows.push(block_part);
            rhs.push(bi - fixed);
        }
    }
    Ok((rows, rhs))
}

fn project_slice_ambient(
    slice: &SliceSet,
    y: &[f64],
    opts: &ProjectOpts,
) -> Result<Vec<f64>, GeometryError> {
    let (parent, blocks, nu, _) = slice.parts();
    let full = slice.assemble(y);
    let r = blocks.range(nu);
    let pin_template = full.clone();
    let pin_range = r.clone();
    let pin: Projector = Box::new(move |p: &[f64], _o: &ProjectOpts| {
        let mut out = pin_template.clone();
        out[pin_range.clone()].copy_from_slice(&p[pin_range.clone()]);
        Ok(out)
    });
    let parent_cl = parent.clone();
    let proj_parent: Projector =
        Box::new(move |p: &[f64], o: &ProjectOpts| project(&parent_cl, p, o));
    let parent_cl2 = parent.clone();
    let full2 = full.clone();
    let r2 = r.clone();
    let inside = move |p: &[f64]| {
        parent_cl2.contains(p, 1e-7)
            && p.iter()
                .enumerate()
                .all(|(i, v)| r2.contains(&i) || (v - full2[i]).abs() <= 1e-7)
    };
    let res = dykstra(&full, &[proj_parent, pin], &inside, opts)?;
    Ok(res[r].to_vec())
}

/// Interval of a one-dimensional slice. Closed forms where the parent
/// allows them, otherwise the quasi-convex violation search.
pub(crate) fn slice_interval(
    slice: &SliceSet,
) -> Option<Result<(f64, f64), GeometryError>> {
    let (parent, blocks, nu, _) = slice.parts();
    let r = blocks.range(nu);
    if r.len() != 1 {
        return None;
    }
    match parent {
        ConvexSet::Box { lo, hi } => Some(Ok((lo[r.start], hi[r.start]))),
        ConvexSet::Polyhedron { .. } => Some(polyhedron_interval(slice)),
        _ => Some(numeric_interval(slice)),
    }
}

fn polyhedron_interval(slice: &SliceSet) -> Result<(f64, f64), GeometryError> {
    let (_, _, nu, _) = slice.parts();
    let (rows, rhs) = materialize_polyhedron_slice(slice)?;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (row, b) in rows.iter().zip(&rhs) {
        let a = row[0];
        if a.abs() <= 1e-14 {
            if *b < -MEMBER_TOL {
                return Err(GeometryError::EmptySlice { player: nu });
            }
        } else if a > 0.0 {
            hi = hi.min(b / a);
        } else {
            lo = lo.max(b / a);
        }
    }
    if lo > hi + MEMBER_TOL {
        return Err(GeometryError::EmptySlice { player: nu });
    }
    Ok((lo, hi.max(lo)))
}

/// Feasible interval of a 1-D slice found through the violation measure,
/// which is quasi-convex along the pinned line.
fn numeric_interval(slice: &SliceSet) -> Result<(f64, f64), GeometryError> {
    let (parent, _, nu, _) = slice.parts();
    let phi = |t: f64| {
        let v = violation(parent, &slice.assemble(&[t]));
        if v.is_nan() {
            BIG
        } else {
            v
        }
    };
    let ftol = 1e-9;

    // Seed from the anchor's own block coordinate, widening the search
    // bracket until a feasible point shows up.
    let t_anchor = {
        let (_, blocks, nu, anchor) = slice.parts();
        anchor[blocks.range(nu).start]
    };
    let mut t0 = None;
    if phi(t_anchor) <= ftol {
        t0 = Some(t_anchor);
    } else {
        for radius in [1.0, 10.0, 100.0, 1e3, 1e6] {
            let t = golden_min(&phi, t_anchor - radius, t_anchor + radius, 200);
            if phi(t) <= ftol {
                t0 = Some(t);
                break;
            }
        }
    }
    let t0 = t0.ok_or(GeometryError::EmptySlice { player: nu })?;

    // Expand outward to bracket each endpoint, then bisect.
    let endpoint = |dir: f64| -> f64 {
        let mut step = 1.0_f64.max(t0.abs() * 1e-3);
        let mut inside = t0;
        loop {
            let cand = inside + dir * step;
            if phi(cand) <= ftol {
                inside = cand;
                step *= 2.0;
                if inside.abs() > 1e7 {
                    return dir * f64::INFINITY;
                }
            } else {
                break;
            }
        }
        let mut outside = inside + dir * step;
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if phi(mid) <= ftol {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };
    let lo = endpoint(-1.0);
    let hi = endpoint(1.0);
    Ok((lo, hi))
}

/// Golden-section minimizer for a unimodal function on `[a, b]`.
pub(crate) fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}
