//! Solver and verifier toolkit for generalized Nash equilibrium problems
//! with a shared convex constraint set (Rosen games).
//!
//! A game couples `p` players through one convex set `X` in the product of
//! their strategy spaces. Player `nu` controls the block `x^nu` and minimizes
//! an objective `theta_nu(x^nu, x^{-nu})` over the slice of `X` obtained by
//! freezing the rivals. The crate provides:
//!
//! * [`expr`] - a small expression language for objectives with exact
//!   evaluation and forward-mode gradients,
//! * [`geometry`] - convex set primitives, projections, slices and the
//!   cross set used by the equilibrium conditions,
//! * [`levelsets`] - sampled level sets of the objectives, adjusted-set
//!   radii and normal-cone membership tests,
//! * [`vi`] - variational and quasi-variational inequality tools built on
//!   those cones (Stampacchia and Minty forms),
//! * [`nash`] - best responses, equilibrium certificates and the reduction
//!   of the game to a two-player Nash problem,
//! * [`coercive`] - boundedness conditions that license truncating an
//!   unbounded `X` to a ball, and a truncation solve loop,
//! * [`cli`] - the `gnep` command line front end with bundled example games.
//!
//! Verdicts produced by sampling are one-sided: `Consistent` means no
//! counterexample was found at the given budget, while `Refuted` carries a
//! witness that re-evaluates against the defining inequality.

pub mod blocks;
pub mod cli;
pub mod coercive;
pub mod expr;
pub mod geometry;
pub mod levelsets;
pub mod nash;
pub mod sampling;
pub mod vi;

mod optim;

#[cfg(test)]
pub(crate) mod testgames;
