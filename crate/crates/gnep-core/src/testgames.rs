//! Small games shared by the unit tests of several modules.

use rand::Rng;

use crate::blocks::BlockStructure;
use crate::expr::parse;
use crate::geometry::ConvexSet;
use crate::nash::RosenGame;
use crate::sampling::{rng_for, Window};

/// Two players on the triangle `x >= 0`, `2 x1 + x2 <= 1`, each pulling
/// toward 2 in its own coordinate. Equilibria: the segment `2x1 + x2 = 1`.
pub(crate) fn aad_game() -> RosenGame {
    let set = ConvexSet::polyhedron(
        vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![2.0, 1.0]],
        vec![0.0, 0.0, 1.0],
    )
    .unwrap();
    RosenGame::new(
        BlockStructure::new(vec![1, 1]),
        set,
        vec![parse("(x1-2)^2", 2).unwrap(), parse("(x2-2)^2", 2).unwrap()],
        Window::new(vec![0.0, 0.0], vec![1.0, 1.0]),
        None,
    )
    .unwrap()
}

/// Quasi-convex two-player game on the square: theta1 = (x1 x2)^2,
/// theta2 = x2^3. The corner (0, -1) is an equilibrium.
pub(crate) fn cavazzuti_game() -> RosenGame {
    RosenGame::new(
        BlockStructure::new(vec![1, 1]),
        ConvexSet::bbox(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        vec![parse("(x1*x2)^2", 2).unwrap(), parse("x2^3", 2).unwrap()],
        Window::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
        None,
    )
    .unwrap()
}

/// Single player on the line with the plateau objective
/// `min(|x1| + |x2|, 1)` against a second linear player; the shared set is
/// the box [-12, 12]^3 with blocks (2, 1).
pub(crate) fn qc_l1_game() -> RosenGame {
    RosenGame::new(
        BlockStructure::new(vec![2, 1]),
        ConvexSet::bbox(vec![-12.0; 3], vec![12.0; 3]).unwrap(),
        vec![
            parse("min(abs(x1) + abs(x2), 1)", 3).unwrap(),
            parse("x3^2", 3).unwrap(),
        ],
        Window::new(vec![-12.0; 3], vec![12.0; 3]),
        None,
    )
    .unwrap()
}

/// One player on the line with the step objective: 1 for x <= 0, 0 for
/// x > 0, written as 0^max(x1, 0).
pub(crate) fn step_game() -> RosenGame {
    RosenGame::new(
        BlockStructure::new(vec![1]),
        ConvexSet::bbox(vec![-1.0], vec![1.0]).unwrap(),
        vec![parse("0^max(x1, 0)", 1).unwrap()],
        Window::new(vec![-2.0], vec![2.0]),
        None,
    )
    .unwrap()
}

/// Zero-sum bilinear game on the square: the stacked gradient map is the
/// rotation (x2, -x1), whose unique VI solution over [-1,1]^2 is the
/// origin. Plain projection iteration spirals outward on it.
pub(crate) fn saddle_game() -> RosenGame {
    RosenGame::new(
        BlockStructure::new(vec![1, 1]),
        ConvexSet::bbox(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        vec![parse("x1*x2", 2).unwrap(), parse("-(x1*x2)", 2).unwrap()],
        Window::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
        None,
    )
    .unwrap()
}

/// Separable convex game on the square, each player minimizing its own
/// coordinate squared. The origin minimizes every objective.
pub(crate) fn separable_game() -> RosenGame {
    RosenGame::new(
        BlockStructure::new(vec![1, 1]),
        ConvexSet::bbox(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        vec![parse("x1^2", 2).unwrap(), parse("x2^2", 2).unwrap()],
        Window::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
        None,
    )
    .unwrap()
}

/// Constant objectives, so every stacked gradient vanishes identically.
pub(crate) fn zero_game() -> RosenGame {
    RosenGame::new(
        BlockStructure::new(vec![1, 1]),
        ConvexSet::bbox(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        vec![parse("0", 2).unwrap(), parse("0", 2).unwrap()],
        Window::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
        None,
    )
    .unwrap()
}

/// Random game with quadratic own-block objectives plus small bilinear
/// cross terms, on a box cut by one halfspace through the interior. The
/// stacked gradient map is affine with symmetric part at least
/// (2 - 5*0.15) I, so it is strongly monotone and the game has a unique
/// variational equilibrium.
pub(crate) fn random_convex_game(k: u64) -> RosenGame {
    let mut rng = rng_for(k, "random-convex-game");
    let players = 2 + rng.gen_range(0..2usize);
    let dims: Vec<usize> = (0..players).map(|_| 1 + rng.gen_range(0..2usize)).collect();
    let n: usize = dims.iter().sum();
    let blocks = BlockStructure::new(dims.clone());

    let mut objectives = Vec::with_capacity(players);
    for nu in 0..players {
        let beta: f64 = rng.gen_range(-0.15..0.15);
        let own: Vec<usize> = blocks.indices(nu);
        let mut s = String::new();
        for &i in &own {
            let c: f64 = rng.gen_range(-0.5..0.5);
            if !s.is_empty() {
                s.push_str(" + ");
            }
            s.push_str(&format!("(x{} - ({c:.6}))^2", i + 1));
        }
        for &i in &own {
            for j in 0..n {
                if own.contains(&j) {
                    continue;
                }
                s.push_str(&format!(" + ({beta:.6})*x{}*x{}", i + 1, j + 1));
            }
        }
        objectives.push(parse(&s, n).unwrap());
    }

    let mut a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
    for v in &mut a {
        *v /= norm;
    }
    let set = ConvexSet::intersection(vec![
        ConvexSet::bbox(vec![-1.5; n], vec![1.5; n]).unwrap(),
        ConvexSet::polyhedron(vec![a], vec![0.3]).unwrap(),
    ])
    .unwrap();

    RosenGame::new(
        blocks,
        set,
        objectives,
        Window::new(vec![-1.5; n], vec![1.5; n]),
        None,
    )
    .unwrap()
}

/// Hyperbola game: X = {x1 > 0, x2 >= 1/x1}, both players minimize the
/// squared distance to the origin in their own coordinate.
pub(crate) fn hyperbola_game() -> RosenGame {
    let g = parse("1/x1 - x2", 2).unwrap();
    let set = ConvexSet::intersection(vec![
        ConvexSet::bbox(vec![1e-9, f64::NEG_INFINITY], vec![f64::INFINITY, f64::INFINITY])
            .unwrap(),
        ConvexSet::sublevel(g, 0.0, vec![1.0, 2.0]).unwrap(),
    ])
    .unwrap();
    RosenGame::new(
        BlockStructure::new(vec![1, 1]),
        set,
        vec![parse("x1^2 + x2^2", 2).unwrap(), parse("x1^2 + x2^2", 2).unwrap()],
        Window::new(vec![0.0, 0.0], vec![6.0, 6.0]),
        None,
    )
    .unwrap()
}

/// Same objectives as the triangle game but on the unbounded positive
/// orthant, window [0,6]^2. The interior point (2,2) is the equilibrium.
pub(crate) fn orthant_target_game() -> RosenGame {
    let set =
        ConvexSet::polyhedron(vec![vec![-1.0, 0.0], vec![0.0, -1.0]], vec![0.0, 0.0]).unwrap();
    RosenGame::new(
        BlockStructure::new(vec![1, 1]),
        set,
        vec![parse("(x1-2)^2", 2).unwrap(), parse("(x2-2)^2", 2).unwrap()],
        Window::new(vec![0.0, 0.0], vec![6.0, 6.0]),
        None,
    )
    .unwrap()
    .with_product_assertion(true)
}

/// Wedge set `x2 >= x1 >= 0` with innocuous objectives; window [0,4]^2.
pub(crate) fn wedge_game() -> RosenGame {
    let set =
        ConvexSet::polyhedron(vec![vec![-1.0, 0.0], vec![1.0, -1.0]], vec![0.0, 0.0]).unwrap();
    RosenGame::new(
        BlockStructure::new(vec![1, 1]),
        set,
        vec![parse("(x1-1)^2", 2).unwrap(), parse("(x2-3)^2", 2).unwrap()],
        Window::new(vec![0.0, 0.0], vec![4.0, 4.0]),
        None,
    )
    .unwrap()
}

/// Both players drift toward the window edge: no equilibrium inside any
/// bounded truncation of the orthant survives verification at [0,10]^2.
pub(crate) fn drift_game() -> RosenGame {
    let set =
        ConvexSet::polyhedron(vec![vec![-1.0, 0.0], vec![0.0, -1.0]], vec![0.0, 0.0]).unwrap();
    RosenGame::new(
        BlockStructure::new(vec![1, 1]),
        set,
        vec![parse("-x1", 2).unwrap(), parse("-x2", 2).unwrap()],
        Window::new(vec![0.0, 0.0], vec![10.0, 10.0]),
        None,
    )
    .unwrap()
    .with_product_assertion(true)
}
