//! Command-line front end: argument parsing, commands and JSON records.

pub mod input;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use symcap::billiards::{billiard_bounds, billiard_radii, default_delta_act, extract_bounces, validate_a_billiard, xi};
use symcap::bodies::ConvexBody;
use symcap::closedform::{capacity_ellipsoid, capacity_ellipsoid_with_bound, CapacityResult};
use symcap::dualsolver::{minimize_capacity, SolverOptions};
use symcap::io::carrier_csv;
use symcap::oracle2d::arc_capacity_2d_with;
use symcap::spectrum::{zeros_in_period, ZeroOptions};
use symcap::symplin::{SymplecticMap, DEFAULT_SYMPLECTIC_TOL};
use symcap::verify::{self, PropertyReport};
use symcap::Error;

use input::{matrix_to_rows, read_body, read_matrix};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NO_ZERO: i32 = 3;
pub const EXIT_NO_FIXED_POINT: i32 = 4;
pub const EXIT_NON_CONVERGENCE: i32 = 5;
pub const EXIT_ORIGIN: i32 = 6;
pub const EXIT_ASSUMPTION: i32 = 7;
pub const EXIT_CARRIER: i32 = 8;
pub const EXIT_ZERO_DENOMINATOR: i32 = 9;
pub const EXIT_CLASSIFICATION: i32 = 10;
pub const EXIT_PROPERTY_FAILED: i32 = 11;

#[derive(Debug, Parser)]
#[command(name = "symcap", version, about = "Generalized EHZ capacities c^Psi of convex bodies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smallest zero t(Psi) of det(Psi - exp(sJ)) on (0, 2pi] and all zeros there.
    Tpsi {
        /// JSON file with the 2n x 2n matrix Psi as row-major nested arrays.
        psi: PathBuf,
    },
    /// Capacity of the ellipsoid { <Sz, z>/2 < 1 } by root finding.
    Ellipsoid {
        /// JSON file with the symplectic matrix Psi.
        psi: PathBuf,
        /// Positive definite S.
        s: PathBuf,
        /// Symplectic Phi for the upper bound (r_n^2/2) t(Phi Psi Phi^-1).
        #[arg(long)]
        phi: Option<PathBuf>,
    },
    /// Capacity of a convex body by the dual action principle.
    Capacity {
        /// JSON file with the symplectic matrix Psi.
        psi: PathBuf,
        /// JSON body description.
        body: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the carrier as CSV (t, q_1..q_n, p_1..p_n).
        #[arg(long, value_name = "PATH")]
        emit_carrier: Option<PathBuf>,
    },
    /// Billiard capacity xi^A_Lambda(Delta) = c^{Psi_A}(Delta x Lambda).
    Billiard {
        /// JSON file with the n x n matrix A.
        a: PathBuf,
        /// JSON description of the table Delta.
        delta: PathBuf,
        /// JSON description of Lambda [default: unit ball].
        #[arg(long, value_name = "FILE")]
        lambda: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Activity threshold for the bounce classification
        /// [default: max(1e-4, 2 x carrier boundary residual)].
        #[arg(long)]
        delta_act: Option<f64>,
        /// Write the bounce points as CSV (j, q_1..q_n, h_Lambda(q_j - q_{j+1})).
        #[arg(long, value_name = "PATH")]
        emit_bounces: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        emit_carrier: Option<PathBuf>,
    },
    /// Property suite over a corpus seeded by --seed: axioms, brunn-minkowski,
    /// croke-weinstein, neduv, continuity.
    Verify {
        suite: String,
        /// Corpus size.
        #[arg(long, default_value_t = 3)]
        count: usize,
        /// Exponent of the p-sum in brunn-minkowski.
        #[arg(long = "sum-p", default_value_t = 1.0)]
        sum_p: f64,
        /// Rotation angle of Psi = R(theta) in every plane.
        #[arg(long, default_value_t = std::f64::consts::TAU)]
        theta: f64,
        /// Directory for <suite>.json.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Planar capacity under R(theta) as the minimal swept sector area.
    Oracle2d {
        /// JSON description of a planar body containing the origin.
        body: PathBuf,
        #[arg(long)]
        theta: f64,
        /// Boundary samples.
        #[arg(long, default_value_t = 4096)]
        samples: usize,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Exponent of the dual functional.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Lattice periods per zero family (lambda_max = 2pi (modes + 1)).
    #[arg(long, default_value_t = 32)]
    pub modes: usize,
    /// Quadrature intervals [default: 8 x modes].
    #[arg(long)]
    pub quad: Option<usize>,
    /// Independent quasi-Newton runs; the smallest value wins.
    #[arg(long, default_value_t = 16)]
    pub restarts: usize,
    /// Seed of the restart generator (and of the verify corpus).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Smallest rounding radius for nonsmooth bodies [default: 1e-3 x inradius].
    #[arg(long)]
    pub round_eps: Option<f64>,
    /// Solve nonsmooth bodies directly instead of through rounding.
    #[arg(long)]
    pub no_rounding: bool,
    /// Quasi-Newton iterations per restart.
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// Record wall-clock timestamps (output is then no longer reproducible).
    #[arg(long)]
    pub timestamps: bool,
}

impl SolverArgs {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            p: self.p,
            modes: self.modes,
            quad: self.quad,
            restarts: self.restarts,
            seed: self.seed,
            round_eps: self.round_eps,
            rounding: !self.no_rounding,
            max_iter: self.max_iter,
            ..SolverOptions::default()
        }
    }

    fn record(&self) -> Value {
        json!({
            "p": self.p,
            "modes": self.modes,
            "quad": self.quad.unwrap_or(8 * self.modes.max(1)),
            "restarts": self.restarts,
            "seed": self.seed,
            "round_eps": self.round_eps,
            "rounding": !self.no_rounding,
            "max_iter": self.max_iter,
        })
    }
}

/// A failure with its exit code and the name of the violated precondition.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub name: &'static str,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, name) = match &e {
            Error::NotSymplectic { .. } => (EXIT_INPUT, "not_symplectic"),
            Error::NotOrthogonal { .. } => (EXIT_INPUT, "not_orthogonal"),
            Error::DimensionMismatch { .. } => (EXIT_INPUT, "dimension_mismatch"),
            Error::SingularMatrix => (EXIT_INPUT, "singular_matrix"),
            Error::InvalidInput(_) => (EXIT_INPUT, "invalid_input"),
            Error::NoZeroFound(_) => (EXIT_NO_ZERO, "no_zero_found"),
            Error::NoFixedInteriorPoint => (EXIT_NO_FIXED_POINT, "no_fixed_interior_point"),
            Error::NonConvergence { .. } => (EXIT_NON_CONVERGENCE, "non_convergence"),
            Error::OriginNotInterior => (EXIT_ORIGIN, "origin_not_interior"),
            Error::AssumptionViolated(_) => (EXIT_ASSUMPTION, "assumption_violated"),
            Error::CarrierResidualTooLarge { .. } => (EXIT_CARRIER, "carrier_residual_too_large"),
            Error::ZeroDenominator => (EXIT_ZERO_DENOMINATOR, "zero_denominator"),
            Error::ClassificationAmbiguous { .. } => (EXIT_CLASSIFICATION, "classification_ambiguous"),
        };
        Failure { code, name, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: EXIT_INPUT, name: "io", message: format!("{}: {e}", path.display()) }
}

/// Rounds every number in `v` to 15 significant digits.
pub fn round_numbers(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if let Some(x) = n.as_f64().filter(|_| n.is_f64()) {
                let r: f64 = format!("{x:.14e}").parse().unwrap_or(x);
                if let Some(m) = serde_json::Number::from_f64(r) {
                    *n = m;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_numbers),
        Value::Object(o) => o.values_mut().for_each(round_numbers),
        _ => {}
    }
}

fn render(mut v: Value) -> String {
    round_numbers(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("record serializes");
    s.push('\n');
    s
}

fn read_psi(path: &Path) -> Result<SymplecticMap, Failure> {
    let m = read_matrix(path)?;
    Ok(SymplecticMap::new(m, DEFAULT_SYMPLECTIC_TOL)?)
}

fn capacity_record(command: &str, options: Value, r: &CapacityResult) -> Value {
    json!({
        "command": command,
        "options": options,
        "value": r.value,
        "method": r.method,
        "diagnostics": r.diagnostics,
    })
}

fn stamp(record: &mut Value, started: Option<std::time::SystemTime>) {
    if let Some(t0) = started {
        let now = std::time::SystemTime::now();
        let secs = |t: std::time::SystemTime| t.duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        record["timestamps"] = json!({ "started": secs(t0), "finished": secs(now) });
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn suite_report(suite: &str, seed: u64, count: usize, sum_p: f64, theta: f64, opts: &SolverOptions) -> Result<Vec<PropertyReport>, Failure> {
    let psi = SymplecticMap::rotation(1, theta);
    let count = count.max(1);
    let reports = match suite {
        "axioms" => vec![verify::check_axioms(&verify::corpus_2d(seed, count)?, &psi, opts, verify::SOLVER_SLACK)?],
        "brunn-minkowski" => {
            let pairs = verify::corpus_pairs(seed, count)?;
            let singles: Vec<_> = pairs.iter().map(|(a, _)| a.clone()).collect();
            vec![
                verify::check_brunn_minkowski(&pairs, &psi, sum_p, opts, verify::SOLVER_SLACK)?,
                verify::check_brunn_minkowski_equality(&singles, &psi, sum_p, opts, 1e-3)?,
            ]
        }
        "croke-weinstein" => {
            let mut rep = PropertyReport::new("croke_weinstein", 2e-2);
            for item in verify::corpus_2d(seed, count)? {
                let z = nalgebra::DVector::zeros(2);
                rep.merge(verify::check_croke_weinstein(&item.label, &item.body, &psi, &z, None, opts, 2e-2)?);
            }
            vec![rep]
        }
        "neduv" => {
            let mut rep = PropertyReport::new("neduv", 1e-6);
            let two = DMatrix::identity(2, 2) * 2.0;
            rep.merge(verify::check_neduv("disc", &two, &SymplecticMap::identity(1), 1e-3, 1e-6)?);
            rep.merge(verify::check_neduv("disc_rotated", &two, &psi, 1e-3, 1e-6)?);
            for item in verify::corpus_2d(seed, 3 * count)?.into_iter().filter(|c| c.label.starts_with("ellipse")) {
                if let symcap::bodies::BodyKind::Ellipsoid { s, .. } = item.body.kind() {
                    rep.merge(verify::check_neduv(&item.label, s, &psi, 1e-3, 1e-6)?);
                }
            }
            vec![rep]
        }
        "continuity" => {
            let mut rep = PropertyReport::new("continuity", verify::SOLVER_SLACK);
            for item in verify::corpus_2d(seed, count)? {
                rep.merge(verify::check_continuity(&item.label, &item.body, &psi, 0.01, opts, verify::SOLVER_SLACK)?);
            }
            vec![rep]
        }
        other => {
            return Err(Failure {
                code: EXIT_INPUT,
                name: "unknown_suite",
                message: format!(
                    "unknown suite '{other}' (expected axioms, brunn-minkowski, croke-weinstein, neduv, continuity)"
                ),
            })
        }
    };
    Ok(reports)
}

#[derive(Serialize)]
struct ZeroRecord<'a> {
    command: &'a str,
    t: f64,
    zeros: &'a [f64],
    multiplicities: &'a [usize],
}

/// Runs one command and returns the text for stdout.
pub fn execute(cli: &Cli) -> Result<String, Failure> {
    match &cli.command {
        Command::Tpsi { psi } => {
            let psi = read_psi(psi)?;
            let zs = zeros_in_period(&psi, &ZeroOptions::default())?;
            let rec = ZeroRecord { command: "tpsi", t: zs.zeros[0], zeros: &zs.zeros, multiplicities: &zs.multiplicities };
            Ok(render(serde_json::to_value(rec).expect("record serializes")))
        }
        Command::Ellipsoid { psi, s, phi } => {
            let psi = read_psi(psi)?;
            let s = read_matrix(s)?;
            let r = match phi {
                Some(p) => capacity_ellipsoid_with_bound(&psi, &s, &read_psi(p)?)?,
                None => capacity_ellipsoid(&psi, &s)?,
            };
            Ok(render(capacity_record("ellipsoid", json!({}), &r)))
        }
        Command::Capacity { psi, body, solver, emit_carrier } => {
            let started = solver.timestamps.then(std::time::SystemTime::now);
            let psi = read_psi(psi)?;
            let body = read_body(body)?;
            let r = minimize_capacity(&psi, &body, &solver.options())?;
            if let (Some(path), Some(c)) = (emit_carrier, &r.carrier) {
                write_file(path, &carrier_csv(c))?;
            }
            let mut rec = capacity_record("capacity", solver.record(), &r);
            stamp(&mut rec, started);
            Ok(render(rec))
        }
        Command::Billiard { a, delta, lambda, solver, delta_act, emit_bounces, emit_carrier } => {
            let started = solver.timestamps.then(std::time::SystemTime::now);
            let a = read_matrix(a)?;
            let delta = read_body(delta)?;
            let lambda = match lambda {
                Some(p) => read_body(p)?,
                None => ConvexBody::unit_ball(a.nrows()),
            };
            let r = xi(&a, &delta, &lambda, &solver.options())?;
            let (_, rin, rout) = billiard_radii(&a, &delta)?;
            let bounds = billiard_bounds(&a, &delta, rin, rout)?;
            let carrier = r.carrier.as_ref().ok_or(Error::InvalidInput("solver returned no carrier".into()))?;
            let da = delta_act.unwrap_or_else(|| default_delta_act(carrier));
            let bounces = extract_bounces(carrier, &a, &delta, &lambda, da)?;
            let report = validate_a_billiard(&bounces.bounce_points[..], &a, &delta, 10.0 * da);
            if let Some(path) = emit_bounces {
                write_file(path, &bounces.to_csv())?;
            }
            if let Some(path) = emit_carrier {
                write_file(path, &carrier_csv(carrier))?;
            }
            let mut rec = capacity_record("billiard", solver.record(), &r);
            rec["a"] = json!(matrix_to_rows(&a));
            rec["bounds"] = json!(bounds);
            rec["bounces"] = json!({
                "points": bounces.bounce_points.iter().map(|q| q.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
                "chord_lengths": bounces.chord_lengths,
                "total_h_length": bounces.total_h_length,
                "carrier_action": bounces.carrier_action,
                "relative_gap": bounces.relative_gap(),
                "bounce_events": bounces.bounce_events,
                "proper": bounces.proper,
                "delta_act": bounces.delta_act,
            });
            rec["billiard_checks"] = json!(report);
            stamp(&mut rec, started);
            Ok(render(rec))
        }
        Command::Verify { suite, count, sum_p, theta, out, solver } => {
            let seed = solver.seed;
            let reports = suite_report(suite, seed, *count, *sum_p, *theta, &solver.options())?;
            let pass = reports.iter().all(|r| r.pass);
            let text = render(json!({
                "command": "verify",
                "suite": suite,
                "seed": seed,
                "count": count,
                "options": solver.record(),
                "pass": pass,
                "reports": reports,
            }));
            if let Some(dir) = out {
                std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
                write_file(&dir.join(format!("{suite}.json")), &text)?;
            }
            if pass {
                Ok(text)
            } else {
                print!("{text}");
                Err(Failure { code: EXIT_PROPERTY_FAILED, name: "property_failed", message: format!("suite {suite} failed") })
            }
        }
        Command::Oracle2d { body, theta, samples } => {
            let body = read_body(body)?;
            let r = arc_capacity_2d_with(&body, *theta, *samples)?;
            let mut options = BTreeMap::new();
            options.insert("theta", *theta);
            options.insert("samples", *samples as f64);
            Ok(render(capacity_record("oracle2d", json!(options), &r)))
        }
    }
}
