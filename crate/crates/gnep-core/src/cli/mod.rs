//! Command-line front end: game-file loading, subcommand dispatch, and
//! report emission.
//!
//! Every successful invocation writes one JSON report to standard output
//! with the top-level keys `command`, `config`, `result`, `warnings`, and
//! `wall_ms`, plus a one-line summary to standard error. Exit codes: 0 for
//! certified or consistent outcomes, 1 for refuted or unconverged ones
//! (and for library failures, which still produce a report), 2 for usage
//! and parse errors, which print to standard error only.
//!
//! The seed resolves as flag, then the `GNEP_SEED` variable, then 42.
//! `--no-timestamp` pins `wall_ms` to 0 so repeated runs are
//! byte-identical. Points on the command line are comma-separated decimals
//! in flat profile order; the game file's `dims` decides block splitting.

pub mod fixtures;
pub mod gamefile;

pub use gamefile::GameFile;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{ArgGroup, Args, Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use crate::coercive::{
    check_condition, implication_audit, solve_unbounded, CoerciveError, CoerciveOutcome,
    CoerciveParams, Condition, UnboundedParams,
};
use crate::geometry::{lsc_probe, GeometryError, LscVerdict, ProjectOpts};
use crate::levelsets::{
    adjustment_radius, cone_direction, cone_test, ConeDirection, ConeKind, Consistency,
    LevelError, LevelParams,
};
use crate::nash::{
    solve, verify_equilibrium, BrParams, GameError, RosenGame, SolveMethod, SolveParams, Verdict,
    VERIFY_TOL,
};
use crate::sampling::Window;
use crate::vi::{minty_qvi_test, minty_test, MintyVerdict, ViError, ViMap};

/// Window enlargement factor for the `--argmin-global` retry: one more
/// pass over the block window scaled about its center.
const ARGMIN_GLOBAL_FACTOR: f64 = 8.0;
/// Default sample budget for the minty subcommand.
const MINTY_BUDGET: usize = 2000;
/// Default violation tolerance for the minty subcommand.
const MINTY_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation or input file: exit 2, no report.
    #[error("{0}")]
    Usage(String),
    /// A library call failed mid-command: exit 1, reported.
    #[error("{0}")]
    Runtime(String),
}

impl From<GameError> for CliError {
    fn from(e: GameError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<LevelError> for CliError {
    fn from(e: LevelError) -> Self {
        match e {
            LevelError::BudgetTooSmall { .. }
            | LevelError::WindowDim { .. }
            | LevelError::DirectionDim { .. }
            | LevelError::ZeroDirection
            | LevelError::PlainDirection => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<ViError> for CliError {
    fn from(e: ViError) -> Self {
        match e {
            ViError::ProfileDim { .. }
            | ViError::BadProfile
            | ViError::BadGamma { .. }
            | ViError::AnchorInfeasible { .. } => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<CoerciveError> for CliError {
    fn from(e: CoerciveError) -> Self {
        match e {
            CoerciveError::BadRho { .. } | CoerciveError::Precondition { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gnep",
    version,
    about = "Generalized Nash games with shared constraints: solve, verify, probe"
)]
struct Cli {
    /// Report wall_ms as 0, making repeated runs byte-identical.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Seed for every sampled computation; GNEP_SEED, then 42, when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a game and certify the result by direct verification.
    Solve(SolveArgs),
    /// Verify a candidate equilibrium profile.
    Verify(VerifyArgs),
    /// Level-set cone tests, directions, and adjustment radii.
    Cones(ConesArgs),
    /// Sampled Minty tests of the VI and quasi-VI formulations.
    Minty(MintyArgs),
    /// Coerciveness conditions and their implication audit.
    Coercive(CoerciveArgs),
    /// Probe lower semicontinuity of a slice map along a rival path.
    Lsc(LscArgs),
    /// List or materialize the bundled example games.
    Examples(ExamplesArgs),
}

/// Comma-separated coordinates.
#[derive(Debug, Clone)]
struct PointList(Vec<f64>);

fn parse_points(text: &str) -> Result<PointList, String> {
    let vals = text
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>().map_err(|e| format!("{t:?}: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PointList(vals))
}

/// Semicolon-separated points, each a comma-separated coordinate list.
#[derive(Debug, Clone)]
struct PathArg(Vec<Vec<f64>>);

fn parse_path(text: &str) -> Result<PathArg, String> {
    let pts = text
        .split(';')
        .map(|p| parse_points(p).map(|pl| pl.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PathArg(pts))
}

fn parse_method(text: &str) -> Result<SolveMethod, String> {
    match text {
        "svi" => Ok(SolveMethod::Svi),
        "qc-svi" => Ok(SolveMethod::QcSvi),
        "qc-svi-adjusted" => Ok(SolveMethod::QcSviAdjusted),
        "best-response" => Ok(SolveMethod::BestResponse),
        "reduction" => Ok(SolveMethod::Reduction),
        other => Err(format!(
            "unknown method {other:?}; expected svi, qc-svi, qc-svi-adjusted, \
             best-response, or reduction"
        )),
    }
}

fn parse_cone_kind(text: &str) -> Result<ConeKind, String> {
    match text {
        "plain" => Ok(ConeKind::Plain),
        "strict" => Ok(ConeKind::Strict),
        "adjusted" => Ok(ConeKind::Adjusted),
        other => Err(format!(
            "unknown cone kind {other:?}; expected plain, strict, or adjusted"
        )),
    }
}

fn parse_condition(text: &str) -> Result<Condition, String> {
    match text {
        "c0" => Ok(Condition::C0),
        "c1" => Ok(Condition::C1),
        "c2" => Ok(Condition::C2),
        "c3" => Ok(Condition::C3),
        other => Err(format!("unknown condition {other:?}; expected c0, c1, c2, or c3")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MintyMode {
    Vi,
    Qvi,
}

fn parse_minty_mode(text: &str) -> Result<MintyMode, String> {
    match text {
        "vi" => Ok(MintyMode::Vi),
        "qvi" => Ok(MintyMode::Qvi),
        other => Err(format!("unknown mode {other:?}; expected vi or qvi")),
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Bundled fixture name or path to a game file.
    game: String,
    #[arg(long, value_parser = parse_method, default_value = "svi")]
    method: SolveMethod,
    /// Stopping tolerance of the chosen method.
    #[arg(long)]
    tol: Option<f64>,
    /// Certification tolerance of the closing verification pass.
    #[arg(long)]
    verify_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Level sampling budget for the qc cone maps.
    #[arg(long)]
    budget: Option<usize>,
    /// Start profile, comma-separated.
    #[arg(long, value_parser = parse_points, allow_hyphen_values = true)]
    start: Option<PointList>,
    /// Run the truncate-solve-certify loop for unbounded sets.
    #[arg(long)]
    unbounded: bool,
    /// Initial truncation radius.
    #[arg(long, requires = "unbounded")]
    rho0: Option<f64>,
    /// Radius growth factor per round.
    #[arg(long, requires = "unbounded")]
    growth: Option<f64>,
    #[arg(long, requires = "unbounded")]
    max_rounds: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Bundled fixture name or path to a game file.
    game: String,
    /// Profile to verify, comma-separated in flat order.
    #[arg(long, value_parser = parse_points, allow_hyphen_values = true)]
    point: PointList,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("op").required(true).args(["direction", "find_direction", "radius"])))]
struct ConesArgs {
    /// Bundled fixture name or path to a game file.
    game: String,
    /// 1-based player index.
    #[arg(long)]
    player: usize,
    /// Anchor profile, comma-separated in flat order.
    #[arg(long, value_parser = parse_points, allow_hyphen_values = true)]
    point: PointList,
    #[arg(long, value_parser = parse_cone_kind, default_value = "plain")]
    kind: ConeKind,
    /// Test this block direction for cone membership.
    #[arg(long, value_parser = parse_points, allow_hyphen_values = true)]
    direction: Option<PointList>,
    /// Search for a maximal-margin cone direction.
    #[arg(long)]
    find_direction: bool,
    /// Report the adjustment radius at the anchor.
    #[arg(long)]
    radius: bool,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    /// Retry once on an enlarged window when the strict sample is empty,
    /// so a window-relative argmin is double-checked globally.
    #[arg(long)]
    argmin_global: bool,
}

#[derive(Args)]
struct MintyArgs {
    /// Bundled fixture name or path to a game file.
    game: String,
    /// Anchor profile, comma-separated in flat order.
    #[arg(long, value_parser = parse_points, allow_hyphen_values = true)]
    point: PointList,
    #[arg(long, value_parser = parse_minty_mode, default_value = "vi")]
    mode: MintyMode,
    /// Cone kind for qvi mode.
    #[arg(long, value_parser = parse_cone_kind)]
    cones: Option<ConeKind>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("what").required(true).args(["condition", "audit"])))]
struct CoerciveArgs {
    /// Bundled fixture name or path to a game file.
    game: String,
    #[arg(long, value_parser = parse_condition)]
    condition: Option<Condition>,
    /// Audit the implication structure instead of one condition.
    #[arg(long)]
    audit: bool,
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Args)]
struct LscArgs {
    /// Bundled fixture name or path to a game file.
    game: String,
    /// 1-based index of the player whose slice map is probed.
    #[arg(long)]
    player: usize,
    /// Rival limit point, flat order over the other blocks.
    #[arg(long, value_parser = parse_points, allow_hyphen_values = true)]
    rivals: PointList,
    /// Candidate block in the limit slice.
    #[arg(long, value_parser = parse_points, allow_hyphen_values = true)]
    block: PointList,
    /// Semicolon-separated rival vectors converging to --rivals.
    #[arg(long, value_parser = parse_path, allow_hyphen_values = true)]
    path: PathArg,
    /// Accepted gap between the last path point and --rivals.
    #[arg(long, default_value_t = 1e-3)]
    path_tol: f64,
}

#[derive(Args)]
struct ExamplesArgs {
    /// List fixture names without writing files.
    #[arg(long)]
    list: bool,
    /// Directory to materialize the fixtures into.
    #[arg(long, default_value = ".")]
    dir: PathBuf,
}

/// Everything a command hands back for report assembly.
struct Outcome {
    config: Value,
    result: Value,
    warnings: Vec<Value>,
    exit: i32,
    summary: String,
}

/// Parse and run an invocation (without the program name), writing the
/// JSON report and the summary line. Returns the exit code.
pub fn run_cli(args: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let started = Instant::now();
    let mut argv = Vec::with_capacity(args.len() + 1);
    argv.push("gnep".to_string());
    argv.extend(args.iter().cloned());

    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    2
                }
            };
        }
    };

    let seed = match resolve_seed(cli.seed) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(stderr, "gnep: {e}");
            return 2;
        }
    };

    let outcome = match &cli.cmd {
        Cmd::Solve(a) => cmd_solve(a, seed),
        Cmd::Verify(a) => cmd_verify(a, seed),
        Cmd::Cones(a) => cmd_cones(a, seed),
        Cmd::Minty(a) => cmd_minty(a, seed),
        Cmd::Coercive(a) => cmd_coercive(a, seed),
        Cmd::Lsc(a) => cmd_lsc(a, seed),
        Cmd::Examples(a) => cmd_examples(a),
    };

    let wall = |no_ts: bool| if no_ts { 0 } else { started.elapsed().as_millis() as u64 };
    match outcome {
        Ok(out) => {
            emit(
                stdout,
                &args.join(" "),
                out.config,
                out.result,
                out.warnings,
                wall(cli.no_timestamp),
            );
            let _ = writeln!(stderr, "{}", out.summary);
            out.exit
        }
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "gnep: {msg}");
            2
        }
        Err(CliError::Runtime(msg)) => {
            emit(
                stdout,
                &args.join(" "),
                json!({ "seed": seed }),
                json!({ "error": msg }),
                Vec::new(),
                wall(cli.no_timestamp),
            );
            let _ = writeln!(stderr, "gnep: {msg}");
            1
        }
    }
}

fn emit(
    stdout: &mut dyn Write,
    command: &str,
    config: Value,
    result: Value,
    warnings: Vec<Value>,
    wall_ms: u64,
) {
    let report = json!({
        "command": command,
        "config": config,
        "result": result,
        "warnings": warnings,
        "wall_ms": wall_ms,
    });
    let text = serde_json::to_string_pretty(&report).expect("reports serialize");
    let _ = writeln!(stdout, "{text}");
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("GNEP_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|e| CliError::Usage(format!("GNEP_SEED {text:?}: {e}"))),
        Err(std::env::VarError::NotPresent) => Ok(42),
        Err(e) => Err(CliError::Usage(format!("GNEP_SEED: {e}"))),
    }
}

fn note(msg: &str) -> Value {
    json!({ "note": msg })
}

/// Load a game by bundled fixture name first, then as a file path. Returns
/// the parsed file, the built game, and any embedded discrepancy warning.
fn load_game(spec: &str) -> Result<(GameFile, RosenGame, Vec<Value>), CliError> {
    let text = match fixtures::lookup(spec) {
        Some(t) => t.to_string(),
        None => {
            let path = std::path::Path::new(spec);
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "no bundled fixture or file named {spec:?}"
                )));
            }
            std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("{spec}: {e}")))?
        }
    };
    let gf = GameFile::parse(&text)?;
    let game = gf.build()?;
    let mut warnings = Vec::new();
    if let Some(d) = gf.discrepancy() {
        warnings.push(json!({ "paper_discrepancy": d }));
    }
    Ok((gf, game, warnings))
}

fn full_point(p: &PointList, game: &RosenGame, what: &str) -> Result<Vec<f64>, CliError> {
    if p.0.len() != game.dim() {
        return Err(CliError::Usage(format!(
            "{what} has {} coordinates, the game needs {}",
            p.0.len(),
            game.dim()
        )));
    }
    Ok(p.0.clone())
}

fn player_index(player: usize, game: &RosenGame) -> Result<usize, CliError> {
    if player == 0 || player > game.players() {
        return Err(CliError::Usage(format!(
            "--player {player} is out of range 1..={}",
            game.players()
        )));
    }
    Ok(player - 1)
}

/// Block window scaled about its center; degenerate spans widen to 1
/// before scaling so a flat window still grows.
fn enlarged_block_window(game: &RosenGame, nu: usize, factor: f64) -> Window {
    let base = game.block_window(nu);
    let center = base.center();
    let spans = base.spans();
    let lo = center
        .iter()
        .zip(&spans)
        .map(|(c, s)| c - 0.5 * factor * s.max(1.0))
        .collect();
    let hi = center
        .iter()
        .zip(&spans)
        .map(|(c, s)| c + 0.5 * factor * s.max(1.0))
        .collect();
    Window::new(lo, hi)
}

fn fmt_point(p: &[f64]) -> String {
    let coords: Vec<String> = p.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", coords.join(", "))
}

fn cmd_solve(a: &SolveArgs, seed: u64) -> Result<Outcome, CliError> {
    let (_, game, mut warnings) = load_game(&a.game)?;
    let mut sp = SolveParams { seed, ..SolveParams::default() };
    if let Some(t) = a.tol {
        sp.tol = t;
    }
    if let Some(t) = a.verify_tol {
        sp.verify_tol = t;
    }
    if let Some(m) = a.max_iter {
        sp.max_iter = m;
    }
    if let Some(b) = a.budget {
        sp.budget = b;
    }
    if let Some(s) = &a.start {
        sp.start = Some(full_point(s, &game, "--start")?);
    }

    let mut config = json!({
        "game": a.game,
        "method": a.method.label(),
        "tol": sp.tol,
        "verify_tol": sp.verify_tol,
        "max_iter": sp.max_iter,
        "budget": sp.budget,
        "seed": seed,
    });

    let (res, cert) = if a.unbounded {
        let mut up = UnboundedParams {
            method: a.method,
            verify_tol: sp.verify_tol,
            solve: sp.clone(),
            ..UnboundedParams::default()
        };
        if let Some(r) = a.rho0 {
            up.rho0 = r;
        }
        if let Some(g) = a.growth {
            up.growth = g;
        }
        if let Some(m) = a.max_rounds {
            up.max_rounds = m;
        }
        config["unbounded"] = json!({
            "rho0": up.rho0,
            "growth": up.growth,
            "max_rounds": up.max_rounds,
        });
        solve_unbounded(&game, &up)?
    } else {
        solve(&game, a.method, &sp)?
    };

    if !res.converged {
        warnings.push(note("the solver stopped without converging; the certificate below is still authoritative"));
    }
    let exit = match cert.verdict {
        Verdict::Certified => 0,
        Verdict::Refuted => 1,
    };
    let summary = format!(
        "{}: {} {} with max regret {:.3e}",
        res.method,
        match cert.verdict {
            Verdict::Certified => "certified",
            Verdict::Refuted => "refuted",
        },
        fmt_point(&res.point),
        cert.max_regret(),
    );
    Ok(Outcome {
        config,
        result: json!({ "solve": res, "certificate": cert }),
        warnings,
        exit,
        summary,
    })
}

fn cmd_verify(a: &VerifyArgs, seed: u64) -> Result<Outcome, CliError> {
    let (_, game, warnings) = load_game(&a.game)?;
    let point = full_point(&a.point, &game, "--point")?;
    let tol = a.tol.unwrap_or(VERIFY_TOL);
    let br = BrParams { seed, ..BrParams::default() };
    let cert = verify_equilibrium(&game, &point, tol, &br)?;
    let exit = match cert.verdict {
        Verdict::Certified => 0,
        Verdict::Refuted => 1,
    };
    let summary = format!(
        "verify {}: {} with max regret {:.3e}",
        fmt_point(&point),
        match cert.verdict {
            Verdict::Certified => "certified",
            Verdict::Refuted => "refuted",
        },
        cert.max_regret(),
    );
    Ok(Outcome {
        config: json!({
            "game": a.game,
            "tol": tol,
            "multistarts": br.multistarts,
            "seed": seed,
        }),
        result: json!({ "certificate": cert }),
        warnings,
        exit,
        summary,
    })
}

fn cmd_cones(a: &ConesArgs, seed: u64) -> Result<Outcome, CliError> {
    let (_, game, mut warnings) = load_game(&a.game)?;
    let nu = player_index(a.player, &game)?;
    let point = full_point(&a.point, &game, "--point")?;
    let params = LevelParams {
        budget: a.budget.unwrap_or_else(|| LevelParams::default().budget),
        tol: a.tol.unwrap_or_else(|| LevelParams::default().tol),
        seed,
    };
    let config = json!({
        "game": a.game,
        "player": a.player,
        "kind": a.kind,
        "budget": params.budget,
        "tol": params.tol,
        "seed": seed,
        "argmin_global": a.argmin_global,
    });
    let retry_note =
        "strict sample empty in the block window; retried on an enlarged window";

    if let Some(u) = &a.direction {
        let need = game.blocks().block_dim(nu);
        if u.0.len() != need {
            return Err(CliError::Usage(format!(
                "--direction has {} coordinates, block {} needs {need}",
                u.0.len(),
                a.player
            )));
        }
        let mut verdict = cone_test(&game, nu, &point, &u.0, a.kind, None, &params)?;
        if verdict.margin.is_none() && a.argmin_global {
            warnings.push(note(retry_note));
            let win = enlarged_block_window(&game, nu, ARGMIN_GLOBAL_FACTOR);
            verdict = cone_test(&game, nu, &point, &u.0, a.kind, Some(&win), &params)?;
        }
        let exit = match verdict.verdict {
            Consistency::Consistent => 0,
            Consistency::Refuted => 1,
        };
        let summary = format!(
            "cone test ({:?} {}): {}",
            a.kind,
            fmt_point(&u.0),
            match verdict.verdict {
                Consistency::Consistent => "consistent",
                Consistency::Refuted => "refuted",
            },
        );
        return Ok(Outcome {
            config,
            result: json!({ "op": "test", "direction": u.0, "verdict": verdict }),
            warnings,
            exit,
            summary,
        });
    }

    if a.find_direction {
        if a.kind == ConeKind::Plain {
            return Err(CliError::Usage(
                "--find-direction needs --kind strict or adjusted".into(),
            ));
        }
        let mut dir = cone_direction(&game, nu, &point, a.kind, None, &params)?;
        if matches!(dir, ConeDirection::AtArgmin) && a.argmin_global {
            warnings.push(note(retry_note));
            let win = enlarged_block_window(&game, nu, ARGMIN_GLOBAL_FACTOR);
            dir = cone_direction(&game, nu, &point, a.kind, Some(&win), &params)?;
        }
        let (exit, summary) = match &dir {
            ConeDirection::AtArgmin => {
                (0, "block argmin: the cone is the whole space".to_string())
            }
            ConeDirection::Direction { u, margin, certified } => {
                if !certified {
                    warnings.push(note("the reported direction failed its certification retest"));
                }
                (
                    if *certified { 0 } else { 1 },
                    format!(
                        "cone direction {} with margin {margin:.3e}{}",
                        fmt_point(u),
                        if *certified { "" } else { " (uncertified)" },
                    ),
                )
            }
        };
        return Ok(Outcome {
            config,
            result: json!({ "op": "direction", "direction": dir }),
            warnings,
            exit,
            summary,
        });
    }

    // --radius, by group exclusivity
    let mut outcome = adjustment_radius(&game, nu, &point, None, &params);
    if matches!(outcome, Err(LevelError::AtArgmin { .. })) && a.argmin_global {
        warnings.push(note(retry_note));
        let win = enlarged_block_window(&game, nu, ARGMIN_GLOBAL_FACTOR);
        outcome = adjustment_radius(&game, nu, &point, Some(&win), &params);
    }
    match outcome {
        Ok(radius) => Ok(Outcome {
            config,
            result: json!({ "op": "radius", "radius": radius }),
            warnings,
            exit: 0,
            summary: format!("adjustment radius {radius:.6}"),
        }),
        Err(LevelError::AtArgmin { .. }) => Ok(Outcome {
            config,
            result: json!({ "op": "radius", "outcome": "at_argmin" }),
            warnings,
            exit: 0,
            summary: "block argmin: the strict level set is empty, no radius".to_string(),
        }),
        Err(e) => Err(e.into()),
    }
}

fn cmd_minty(a: &MintyArgs, seed: u64) -> Result<Outcome, CliError> {
    let (_, game, warnings) = load_game(&a.game)?;
    let point = full_point(&a.point, &game, "--point")?;
    let budget = a.budget.unwrap_or(MINTY_BUDGET);
    let tol = a.tol.unwrap_or(MINTY_TOL);

    let (verdict, mode_text, config) = match a.mode {
        MintyMode::Vi => {
            if a.cones.is_some() {
                return Err(CliError::Usage("--cones applies only to --mode qvi".into()));
            }
            let map = ViMap::GradientStack { game: &game };
            let verdict = minty_test(&map, game.set(), &point, budget, tol, seed)?;
            let config = json!({
                "game": a.game,
                "mode": "vi",
                "budget": budget,
                "tol": tol,
                "seed": seed,
            });
            (verdict, "vi".to_string(), config)
        }
        MintyMode::Qvi => {
            let kind = a.cones.unwrap_or(ConeKind::Plain);
            let verdict = minty_qvi_test(&game, &point, kind, budget, tol, seed)?;
            let config = json!({
                "game": a.game,
                "mode": "qvi",
                "cones": kind,
                "budget": budget,
                "tol": tol,
                "seed": seed,
            });
            (verdict, format!("qvi ({kind:?} cones)"), config)
        }
    };

    let (exit, summary) = match &verdict {
        MintyVerdict::Refuted { witness, value } => (
            1,
            format!("minty {mode_text}: refuted at {} (value {value:.3e})", fmt_point(witness)),
        ),
        MintyVerdict::Consistent { min_value } => (
            0,
            format!("minty {mode_text}: consistent (min sampled value {min_value:.3e})"),
        ),
    };
    Ok(Outcome {
        config,
        result: json!({ "minty": verdict }),
        warnings,
        exit,
        summary,
    })
}

fn cmd_coercive(a: &CoerciveArgs, seed: u64) -> Result<Outcome, CliError> {
    let (_, game, warnings) = load_game(&a.game)?;
    let params = CoerciveParams { budget: a.budget.unwrap_or_else(|| CoerciveParams::default().budget), seed };

    if let Some(which) = a.condition {
        let v = check_condition(&game, which, a.rho, &params)?;
        let (exit, summary) = match v.verdict {
            CoerciveOutcome::ConsistentAtBudget => (
                0,
                format!("{which} at rho {}: consistent at budget {}", a.rho, params.budget),
            ),
            CoerciveOutcome::Refuted => {
                let at = v
                    .witness
                    .as_ref()
                    .map(|w| format!(" at x = {}", fmt_point(&w.x)))
                    .unwrap_or_default();
                (1, format!("{which} at rho {}: refuted{at}", a.rho))
            }
            CoerciveOutcome::PreconditionFailed => (
                1,
                format!("{which} at rho {}: the ball misses the set", a.rho),
            ),
        };
        return Ok(Outcome {
            config: json!({
                "game": a.game,
                "condition": which,
                "rho": a.rho,
                "budget": params.budget,
                "seed": seed,
            }),
            result: json!({ "verdict": v }),
            warnings,
            exit,
            summary,
        });
    }

    let report = implication_audit(&game, a.rho, &params)?;
    let anomaly =
        report.c2_to_c1.anomaly || report.c1_to_c0.as_ref().is_some_and(|p| p.anomaly);
    let summary = if anomaly {
        format!("audit at rho {}: implication anomaly found", a.rho)
    } else {
        format!(
            "audit at rho {}: no anomalies, {} rectangle probes",
            a.rho,
            report.rectangle_probes.len(),
        )
    };
    Ok(Outcome {
        config: json!({
            "game": a.game,
            "audit": true,
            "rho": a.rho,
            "budget": params.budget,
            "seed": seed,
        }),
        result: json!({ "audit": report }),
        warnings,
        exit: if anomaly { 1 } else { 0 },
        summary,
    })
}

fn cmd_lsc(a: &LscArgs, seed: u64) -> Result<Outcome, CliError> {
    let (_, game, warnings) = load_game(&a.game)?;
    let nu = player_index(a.player, &game)?;
    let block_dim = game.blocks().block_dim(nu);
    let rival_dim = game.dim() - block_dim;
    if a.rivals.0.len() != rival_dim {
        return Err(CliError::Usage(format!(
            "--rivals has {} coordinates, the other blocks need {rival_dim}",
            a.rivals.0.len()
        )));
    }
    if a.block.0.len() != block_dim {
        return Err(CliError::Usage(format!(
            "--block has {} coordinates, block {} needs {block_dim}",
            a.block.0.len(),
            a.player
        )));
    }
    if let Some(bad) = a.path.0.iter().find(|p| p.len() != rival_dim) {
        return Err(CliError::Usage(format!(
            "--path point {} has {} coordinates, the other blocks need {rival_dim}",
            fmt_point(bad),
            bad.len()
        )));
    }

    let verdict = lsc_probe(
        game.set(),
        game.blocks(),
        nu,
        &a.rivals.0,
        &a.block.0,
        &a.path.0,
        a.path_tol,
        &ProjectOpts::default(),
    )
    .map_err(|e| match e {
        GeometryError::Invalid(msg) => CliError::Usage(msg),
        other => CliError::Runtime(other.to_string()),
    })?;

    let (exit, summary) = match &verdict {
        LscVerdict::ConsistentWithLsc { .. } => {
            (0, "lsc probe: consistent, the slice distances decay".to_string())
        }
        LscVerdict::LscRefuted { witness_gap, .. } => (
            1,
            format!("lsc probe: refuted, distance stays at {witness_gap:.3e} along the path"),
        ),
    };
    Ok(Outcome {
        config: json!({
            "game": a.game,
            "player": a.player,
            "path_len": a.path.0.len(),
            "path_tol": a.path_tol,
            "seed": seed,
        }),
        result: json!({ "lsc": verdict }),
        warnings,
        exit,
        summary,
    })
}

fn cmd_examples(a: &ExamplesArgs) -> Result<Outcome, CliError> {
    if a.list {
        return Ok(Outcome {
            config: json!({ "list": true }),
            result: json!({ "fixtures": fixtures::NAMES }),
            warnings: Vec::new(),
            exit: 0,
            summary: format!("{} bundled fixtures", fixtures::NAMES.len()),
        });
    }
    std::fs::create_dir_all(&a.dir)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.dir.display())))?;
    let mut written = Vec::new();
    for name in fixtures::NAMES {
        let path = a.dir.join(format!("{name}.toml"));
        std::fs::write(&path, fixtures::lookup(name).expect("bundled name"))
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        written.push(path.display().to_string());
    }
    Ok(Outcome {
        config: json!({ "list": false, "dir": a.dir }),
        result: json!({ "fixtures": fixtures::NAMES, "written": written }),
        warnings: Vec::new(),
        exit: 0,
        summary: format!("wrote {} fixtures to {}", written.len(), a.dir.display()),
    })
}
