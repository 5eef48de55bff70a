//! Experiment configuration, orchestration and artifacts.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Ix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, DomainSpec, Parity};
use crate::elliptic::{c1_sweep, divcurl_sweep, poincare_sweep, solve_divcurl_2d};
use crate::error::{Error, Result};
use crate::fields::{norm, rot2_scalar, NormKind, Velocity2D, Velocity3D, Vorticity2D};
use crate::forcing::{Forcing2D, Forcing3D, ForcingSpec};
use crate::ledger::{
    compute_a, compute_b, hypothesis_checks, monitor_recursions, monitor_stability, ConstantsLedger,
    HypothesisInputs, LedgerParams, MonitorDocument, StabilityChecks,
};
use crate::ns2d::{cfl_limit_2d, init_2d, run_2d, Initial2D, RunSettings, Stepper2D, TrajectoryLog};
use crate::ns3d::{cfl_limit_3d, init_3d, run_stability, Coupled, Initial3D, StabilitySettings, Stepper3D};

pub const SCHEMA: &str = "slipflow/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Constants,
    Decay2d,
    Stability3d,
    Oracle,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Constants => "constants",
            Experiment::Decay2d => "decay2d",
            Experiment::Stability3d => "stability3d",
            Experiment::Oracle => "oracle",
        })
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown experiment {s:?}")))
    }
}

fn default_k_max() -> usize {
    1
}

fn default_stride() -> usize {
    10
}

fn default_sigma() -> f64 {
    4.0
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_initial_2d() -> Initial2D {
    Initial2D::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub experiment: Experiment,
    pub domain: DomainSpec,
    #[serde(default = "default_initial_2d")]
    pub initial_2d: Initial2D,
    #[serde(default)]
    pub initial_3d: Option<Initial3D>,
    #[serde(default)]
    pub forcing_2d: ForcingSpec,
    #[serde(default)]
    pub forcing_3d: ForcingSpec,
    /// Time step; defaults to half the CFL limit of the initial state, at
    /// most `T/100`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Exponent of the logged base-flow `W^1_sigma` norm.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub ledger: LedgerParams,
    /// Perturbation threshold; defaults to `gamma_*`.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub check_l2_lemma: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Replaces the seeds of random presets and embedding estimates.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::Config(format!("schema {:?}, expected {SCHEMA:?}", self.schema)));
        }
        self.domain.validate()?;
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.k_max == 0 && self.experiment != Experiment::Oracle {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("dt must be positive, got {dt}")));
            }
        }
        if let Some(c) = self.ledger.c_star {
            if !(c > 0.0 && c <= self.domain.nu) {
                return Err(Error::Config(format!("c_star {c} outside (0, nu]")));
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("gamma must be positive, got {g}")));
            }
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("tolerance must be non-negative".into()));
        }
        if !(self.sigma > 1.0) {
            return Err(Error::Config("sigma must exceed 1".into()));
        }
        if self.experiment == Experiment::Stability3d && self.initial_3d.is_none() {
            return Err(Error::Config("stability3d needs initial_3d".into()));
        }
        Ok(())
    }

    /// Applies a global seed to every random preset and estimate.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn seeded(&self) -> (Initial2D, Option<Initial3D>, LedgerParams) {
        let mut i2 = self.initial_2d.clone();
        let mut i3 = self.initial_3d.clone();
        let mut lp = self.ledger.clone();
        if let Some(s) = self.seed {
            if let Initial2D::Random { seed, .. } = &mut i2 {
                *seed = s;
            }
            if let Some(Initial3D::Random { seed, .. }) = &mut i3 {
                *seed = s.wrapping_add(1);
            }
            lp.seed = s;
        }
        (i2, i3, lp)
    }
}

/// Process exit status of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    MonitorFailure = 1,
    ConfigError = 2,
    BlowUp = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_error(e: &Error) -> Self {
        match e {
            Error::BlowUp { .. } | Error::Cfl { .. } => ExitStatus::BlowUp,
            _ => ExitStatus::ConfigError,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: ExitStatus,
    pub artifacts: Vec<PathBuf>,
    pub verdict: Option<String>,
    pub document: Option<MonitorDocument>,
}

fn default_dt(domain: &Domain, w: &Velocity2D, u: Option<&Velocity3D>) -> Result<f64> {
    let mut rate = 1.0 / cfl_limit_2d(domain, w)?;
    if let Some(u) = u {
        rate += 1.0 / cfl_limit_3d(domain, u)?;
    }
    let cap = domain.period() / 100.0;
    Ok(if rate > 0.0 { cap.min(0.5 / rate) } else { cap })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn status_of(doc: &MonitorDocument) -> ExitStatus {
    if doc.all_pass() {
        ExitStatus::Ok
    } else {
        ExitStatus::MonitorFailure
    }
}

/// Runs one experiment, writing artifacts to `out` (or the configured
/// output directory, or the current directory).
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<Outcome> {
    config.validate()?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let domain = Domain::new(config.domain.clone())?;
    match config.experiment {
        Experiment::Constants => run_constants(config, &domain, &dir),
        Experiment::Decay2d => run_decay(config, &domain, &dir),
        Experiment::Stability3d => run_stability_experiment(config, &domain, &dir),
        Experiment::Oracle => run_oracle(config, &domain, &dir),
    }
}

/// 2D run shared by the constants and decay experiments.
fn base_run(config: &ExperimentConfig, domain: &Domain) -> Result<(TrajectoryLog, ConstantsLedger)> {
    let (i2, _, lp) = config.seeded();
    let state = init_2d(domain, &i2)?;
    let forcing = Forcing2D::resolve(domain, &config.forcing_2d)?;
    let dt = match config.dt {
        Some(dt) => dt,
        None => default_dt(domain, &state.w, None)?,
    };
    let settings = RunSettings {
        k_max: config.k_max,
        dt,
        stride: config.stride,
        sigma: config.sigma,
    };
    let (_, log) = run_2d(domain, &state, &forcing, &settings)?;
    let mut ledger = ConstantsLedger::new(domain, &lp)?;
    ledger.a = Some(compute_a(&log, &ledger)?);
    Ok((log, ledger))
}

fn run_constants(config: &ExperimentConfig, domain: &Domain, dir: &Path) -> Result<Outcome> {
    let (_, ledger) = base_run(config, domain)?;
    let path = dir.join("ledger.json");
    write_json(&path, &ledger)?;
    Ok(Outcome {
        status: ExitStatus::Ok,
        artifacts: vec![path],
        verdict: None,
        document: None,
    })
}

fn run_decay(config: &ExperimentConfig, domain: &Domain, dir: &Path) -> Result<Outcome> {
    let (log, ledger) = base_run(config, domain)?;
    let monitors = monitor_recursions(&log, &ledger, config.tolerance)?;
    let doc = MonitorDocument {
        constants: ledger,
        hypotheses: Vec::new(),
        monitors,
        empirical_c0: None,
    };
    let paths = [dir.join("trajectory.csv"), dir.join("ledger.json"), dir.join("monitors.json")];
    log.save(&paths[0])?;
    write_json(&paths[1], &doc.constants)?;
    write_json(&paths[2], &doc)?;
    Ok(Outcome {
        status: status_of(&doc),
        artifacts: paths.to_vec(),
        verdict: None,
        document: Some(doc),
    })
}

fn run_stability_experiment(config: &ExperimentConfig, domain: &Domain, dir: &Path) -> Result<Outcome> {
    let (i2, i3, lp) = config.seeded();
    let mut ledger = ConstantsLedger::new(domain, &lp)?;
    let gamma = config.gamma.unwrap_or(ledger.gamma_star);
    let base = init_2d(domain, &i2)?;
    let u0 = init_3d(domain, i3.as_ref().ok_or(Error::Config("missing initial_3d".into()))?, Some(gamma))?;
    let h = Forcing2D::resolve(domain, &config.forcing_2d)?;
    let g = Forcing3D::resolve(domain, &config.forcing_3d)?;
    let dt = match config.dt {
        Some(dt) => dt,
        None => default_dt(domain, &base.w, Some(&u0.u))?,
    };
    let settings = StabilitySettings {
        k_max: config.k_max,
        dt,
        stride: config.stride,
        sigma: config.sigma,
        sigma_plus: ledger.sigma_plus,
        c_generic: ledger.c_generic,
    };
    let run = run_stability(domain, &u0, &base, &h, &g, &settings, &mut |_, _| {})?;
    ledger.a = Some(compute_a(&run.base_log, &ledger)?);
    ledger.b = Some(compute_b(&run.log, &ledger)?);
    let inputs = HypothesisInputs {
        gamma,
        u0_h1_sq: run.log.samples[0].u_h1,
        sup_g2: run.log.samples.iter().map(|s| s.g2).fold(0.0, f64::max),
        include_l2_lemma: config.check_l2_lemma,
    };
    let hypotheses = hypothesis_checks(&ledger, &inputs, config.tolerance)?;
    let checks = StabilityChecks {
        gamma,
        rel_tol: config.tolerance,
        check_l2_lemma: config.check_l2_lemma,
    };
    let outcome = monitor_stability(&run.log, &ledger, &checks)?;
    let verdict = match outcome.violation {
        None => format!("STABLE(γ={gamma})"),
        Some(t) => format!("VIOLATION(t={t})"),
    };
    let doc = MonitorDocument {
        constants: ledger,
        hypotheses,
        monitors: outcome.reports,
        empirical_c0: outcome.empirical_c0,
    };
    let paths = [
        dir.join("trajectory.csv"),
        dir.join("stability.csv"),
        dir.join("ledger.json"),
        dir.join("monitors.json"),
        dir.join("verdict.txt"),
    ];
    run.base_log.save(&paths[0])?;
    run.log.save(&paths[1])?;
    write_json(&paths[2], &doc.constants)?;
    write_json(&paths[3], &doc)?;
    fs::write(&paths[4], format!("{verdict}\n"))?;
    Ok(Outcome {
        status: status_of(&doc),
        artifacts: paths.to_vec(),
        verdict: Some(verdict),
        document: Some(doc),
    })
}

/// One line of the oracle table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub case: String,
    pub resolution: String,
    pub value: f64,
    pub reference: f64,
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleRow {
    fn new(case: &str, resolution: String, value: f64, reference: f64, error: f64, tolerance: f64) -> Self {
        OracleRow {
            case: case.to_string(),
            resolution,
            value,
            reference,
            error,
            tolerance,
            pass: error.is_finite() && error <= tolerance,
        }
    }
}

pub const ORACLE_COLUMNS: [&str; 7] = ["case", "resolution", "value", "reference", "error", "tolerance", "pass"];

/// `||w(t_end)||` of a decaying lowest mode against `exp(-nu lambda t)`;
/// returns `(value, reference)`.
pub fn taylor_green_decay(domain: &Domain, dt: f64, t_end: f64) -> Result<(f64, f64)> {
    let state = init_2d(domain, &Initial2D::TaylorGreen { amplitude: 1.0 })?;
    let zero = Forcing2D::resolve(domain, &ForcingSpec::zero())?;
    let (n, dt) = crate::ns2d::interval_steps(t_end, dt)?;
    let stepper = Stepper2D::new(domain, &zero, dt)?;
    let mut w = state.w.clone();
    for j in 0..n {
        w = stepper.advance(&w, j as f64 * dt)?;
    }
    let n0 = norm(domain, &state.w, NormKind::L2)?;
    let rate = domain.nu() * domain.lambda(&[1, 1]);
    Ok((norm(domain, &w, NormKind::L2)?, n0 * (-rate * t_end).exp()))
}

/// Divergence-free mode `(2 k2 k3, -k1 k3, -k1 k2)` on `(1, 1, 1)`.
pub fn eigenmode_amplitudes(domain: &Domain, amplitude: f64) -> [f64; 3] {
    let k = [domain.kappa(0, 1), domain.kappa(1, 1), domain.kappa(2, 1)];
    let a = [2.0 * k[1] * k[2], -k[0] * k[2], -k[0] * k[1]];
    let s = amplitude / (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    a.map(|v| v * s)
}

/// `||u(t_end)||` of a free 3D mode against `exp(-nu |kappa|^2 t)`.
pub fn eigenmode_decay(domain: &Domain, amplitude: f64, dt: f64, t_end: f64) -> Result<(f64, f64)> {
    let a = eigenmode_amplitudes(domain, amplitude);
    let u0 = init_3d(domain, &Initial3D::Eigenmode { a, mode: vec![1, 1, 1] }, None)?;
    let h = Forcing2D::resolve(domain, &ForcingSpec::zero())?;
    let g = Forcing3D::resolve(domain, &ForcingSpec::zero())?;
    let (n, dt) = crate::ns2d::interval_steps(t_end, dt)?;
    let stepper = Stepper3D::new(domain, &h, &g, dt)?;
    let mut y = Coupled {
        w: Velocity2D::zeros(domain),
        u: u0.u.clone(),
    };
    for j in 0..n {
        y = stepper.advance(&y, j as f64 * dt, &mut |_, _| {})?;
    }
    let n0 = norm(domain, &u0.u, NormKind::L2)?;
    let rate = domain.nu() * domain.lambda(&[1, 1, 1]);
    Ok((norm(domain, &y.u, NormKind::L2)?, n0 * (-rate * t_end).exp()))
}

/// Largest relative coefficient error of `rot(solve(b)) = b` over random `b`.
pub fn divcurl_roundtrip(domain: &Domain, seed: u64, samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = domain.modal_shape(2);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut b = Vorticity2D::zeros(domain);
        for ((i, j), v) in b.omega.indexed_iter_mut() {
            if i > 0 && j > 0 && i < shape[0] && j < shape[1] {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let w = solve_divcurl_2d(domain, &b);
        let back = rot2_scalar(domain, &w);
        let scale = b.omega.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = (&back.omega - &b.omega).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(err / scale);
    }
    worst
}

/// `f(x) = sin x / (b - cos x)` and four derivatives.
fn manufactured_profile(b: f64, x: f64) -> [f64; 5] {
    let (s, c) = (x.sin(), x.cos());
    let d = b - c;
    [
        s / d,
        (b * c - 1.0) / (d * d),
        -(b * b + b * c - 2.0) * s / d.powi(3),
        -(b.powi(3) * c - 4.0 * b * b * s * s - b * s * s * c - 3.0 * b * c + 4.0 * s * s + 2.0) / d.powi(4),
        (b.powi(4) + 11.0 * b.powi(3) * c + 11.0 * b * b * c * c - 20.0 * b * b + b * c.powi(3) - 20.0 * b * c
            - 8.0 * c * c
            + 24.0)
            * s
            / d.powi(5),
    ]
}

/// Parameters of the steady manufactured flow `psi = A f(pi x1/L1) f(pi x2/L2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub amplitude: f64,
    pub b: f64,
    pub dt: f64,
    pub t_end: f64,
}

impl Default for Manufactured {
    fn default() -> Self {
        Manufactured {
            amplitude: 0.5,
            b: 2.0,
            dt: 2.5e-3,
            t_end: 10.0,
        }
    }
}

const MANUFACTURED_REFERENCE_MODES: usize = 64;

/// Drives the 2D solver with the force that makes the manufactured
/// streamfunction steady, then returns the L2 velocity error against its
/// exact coefficients `4 A r^(m+n)`, `r = b - sqrt(b^2 - 1)`.
pub fn manufactured_steady_error(spec: &DomainSpec, n: usize, m: &Manufactured) -> Result<f64> {
    let domain = Domain::new(DomainSpec { n1: n, n2: n, n3: n, ..spec.clone() })?;
    let nu = domain.nu();
    let s = [std::f64::consts::PI / spec.l1, std::f64::consts::PI / spec.l2];
    let derivs = |x: &[f64]| {
        let fx = manufactured_profile(m.b, s[0] * x[0]);
        let fy = manufactured_profile(m.b, s[1] * x[1]);
        let dx: Vec<f64> = (0..5).map(|k| s[0].powi(k as i32) * fx[k]).collect();
        let dy: Vec<f64> = (0..5).map(|k| s[1].powi(k as i32) * fy[k]).collect();
        (dx, dy)
    };
    let a = m.amplitude;
    let force = |x: &[f64]| {
        let (fx, fy) = derivs(x);
        let w1 = -a * fx[0] * fy[1];
        let w2 = a * fx[1] * fy[0];
        let om_x = a * (fx[3] * fy[0] + fx[1] * fy[2]);
        let om_y = a * (fx[2] * fy[1] + fx[0] * fy[3]);
        let lap_om = a * (fx[4] * fy[0] + 2.0 * fx[2] * fy[2] + fx[0] * fy[4]);
        w1 * om_x + w2 * om_y - nu * lap_om
    };
    let shape = domain.modal_shape(2);
    let dim = Ix2(shape[0], shape[1]);
    let ss = [Parity::Sine, Parity::Sine];
    let omega_h = domain.project_fn(dim, &ss, 4, force)?;
    let h = Forcing2D::from_field(&domain, solve_divcurl_2d(&domain, &Vorticity2D { omega: omega_h }));
    let psi0 = domain.project_fn(dim, &ss, 4, |x| {
        let (fx, fy) = derivs(x);
        a * fx[0] * fy[0]
    })?;
    let (steps, dt) = crate::ns2d::interval_steps(m.t_end, m.dt)?;
    let stepper = Stepper2D::new(&domain, &h, dt)?;
    let mut w = Velocity2D { psi: psi0 };
    for j in 0..steps {
        w = stepper.advance(&w, j as f64 * dt)?;
    }

    let reference = Domain::new(DomainSpec {
        n1: MANUFACTURED_REFERENCE_MODES,
        n2: MANUFACTURED_REFERENCE_MODES,
        n3: MANUFACTURED_REFERENCE_MODES,
        ..spec.clone()
    })?;
    let r = m.b - (m.b * m.b - 1.0).sqrt();
    let mut diff = Velocity2D::zeros(&reference);
    for ((i, j), v) in diff.psi.indexed_iter_mut() {
        if i > 0 && j > 0 {
            *v = -4.0 * a * r.powi((i + j) as i32);
            if i < shape[0] && j < shape[1] {
                *v += w.psi[[i, j]];
            }
        }
    }
    norm(&reference, &diff, NormKind::L2)
}

/// Rows of the oracle table for the configured domain.
pub fn oracle_rows(config: &ExperimentConfig, domain: &Domain) -> Result<Vec<OracleRow>> {
    let (_, _, lp) = config.seeded();
    let seed = lp.seed;
    let res2 = format!("{}x{}", domain.axis(0).modes, domain.axis(1).modes);
    let res3 = format!("{res2}x{}", domain.axis(2).modes);
    let dt = config.dt.unwrap_or(1e-3);
    let mut rows = Vec::new();

    let t_end = domain.period();
    let (v, r) = taylor_green_decay(domain, dt, t_end)?;
    rows.push(OracleRow::new("taylor-green-2d", res2.clone(), v, r, (v - r).abs() / r, 1e-8));
    let (v, r) = eigenmode_decay(domain, 1e-5, dt, 0.5 * t_end)?;
    rows.push(OracleRow::new("eigenmode-3d", res3.clone(), v, r, (v - r).abs() / r, 1e-8));
    let e = divcurl_roundtrip(domain, seed, 10);
    rows.push(OracleRow::new("divcurl-roundtrip", res2.clone(), e, 0.0, e, 1e-12));

    let samples = 1000;
    let cp = crate::elliptic::poincare_constant(domain).value;
    let sweep = poincare_sweep(domain, samples, seed);
    rows.push(OracleRow::new("c_p-sweep", res2.clone(), sweep, cp, (cp - sweep).max(0.0), 1e-12));
    let c1 = crate::elliptic::coercivity_c1(domain).value;
    let sweep = c1_sweep(domain, samples, seed);
    rows.push(OracleRow::new("c_1-sweep", res2.clone(), sweep, c1, (c1 - sweep).max(0.0), 1e-12));
    let ce = crate::elliptic::divcurl_constant_3d(domain).value;
    let sweep = divcurl_sweep(domain, samples, seed);
    rows.push(OracleRow::new("c_e-sweep", res3, sweep, ce, (sweep - ce).max(0.0), 1e-12));

    let m = Manufactured::default();
    let coarse = manufactured_steady_error(domain.spec(), 12, &m)?;
    let fine = manufactured_steady_error(domain.spec(), 32, &m)?;
    rows.push(OracleRow::new("manufactured-2d", "12x12".into(), coarse, 0.0, coarse, f64::INFINITY));
    rows.push(OracleRow::new("manufactured-2d", "32x32".into(), fine, 0.0, fine, 1e-8));
    rows.push(OracleRow::new(
        "manufactured-2d-gain",
        "12/32".into(),
        coarse / fine,
        1e3,
        1e3 * fine / coarse,
        1.0,
    ));
    Ok(rows)
}

fn run_oracle(config: &ExperimentConfig, domain: &Domain, dir: &Path) -> Result<Outcome> {
    let rows = oracle_rows(config, domain)?;
    let path = dir.join("oracle.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(ORACLE_COLUMNS)?;
    for r in &rows {
        w.write_record([
            r.case.clone(),
            r.resolution.clone(),
            crate::ns2d::fmt_f64(r.value),
            crate::ns2d::fmt_f64(r.reference),
            crate::ns2d::fmt_f64(r.error),
            crate::ns2d::fmt_f64(r.tolerance),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    let status = if rows.iter().all(|r| r.pass) {
        ExitStatus::Ok
    } else {
        ExitStatus::MonitorFailure
    };
    Ok(Outcome {
        status,
        artifacts: vec![path],
        verdict: None,
        document: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::gamma_star;

    fn base_json(experiment: &str) -> String {
        format!(
            r#"{{"schema":"slipflow/1","experiment":"{experiment}",
               "domain":{{"L1":3.141592653589793,"L2":3.141592653589793,"a":1.5707963267948966,
                          "N1":8,"N2":8,"N3":8,"nu":1.0,"T":1.0}},
               "initial_2d":{{"preset":"taylor-green"}},"dt":0.01,"stride":5}}"#
        )
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = ExperimentConfig::from_json(&base_json("decay2d")).unwrap();
        assert_eq!(cfg.experiment, Experiment::Decay2d);
        assert_eq!(cfg.k_max, 1);
        assert_eq!(cfg.ledger.c_generic, 1.0);
        assert!(matches!(
            ExperimentConfig::from_json(&base_json("decay2d").replace("slipflow/1", "slipflow/0")),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_json(&base_json("decay2d").replace("\"stride\"", "\"strid\"")).is_err());
        assert!(ExperimentConfig::from_json(&base_json("warp")).is_err());
        assert!(ExperimentConfig::from_json(&base_json("stability3d")).is_err());
        let bad_star = base_json("decay2d").replace("\"stride\":5", "\"stride\":5,\"ledger\":{\"c_star\":2.0}");
        assert!(ExperimentConfig::from_json(&bad_star).is_err());
        assert_eq!("oracle".parse::<Experiment>().unwrap(), Experiment::Oracle);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(ExitStatus::from_error(&Error::BlowUp { t: 1.0 }).code(), 3);
        assert_eq!(ExitStatus::from_error(&Error::Cfl { t: 0.0, dt: 1.0, number: 2.0 }).code(), 3);
        assert_eq!(ExitStatus::from_error(&Error::Config("x".into())).code(), 2);
        assert_eq!(ExitStatus::MonitorFailure.code(), 1);
    }

    #[test]
    fn seed_override_reaches_presets() {
        let text = base_json("decay2d").replace(
            r#"{"preset":"taylor-green"}"#,
            r#"{"preset":"random","seed":1,"energy":0.5}"#,
        );
        let cfg = ExperimentConfig::from_json(&text).unwrap().with_seed(9);
        let (i2, _, lp) = cfg.seeded();
        assert_eq!(i2, Initial2D::Random { seed: 9, energy: 0.5, band: None });
        assert_eq!(lp.seed, 9);
    }

    #[test]
    fn manufactured_profile_matches_its_series() {
        let r = 2.0 - 3f64.sqrt();
        for x in [0.2, 1.3, 2.9] {
            let series: f64 = (1..80).map(|m| 2.0 * r.powi(m) * (m as f64 * x).sin()).sum();
            let d4: f64 = (1..80).map(|m| 2.0 * r.powi(m) * (m as f64).powi(4) * (m as f64 * x).sin()).sum();
            let f = manufactured_profile(2.0, x);
            assert!((f[0] - series).abs() < 1e-14);
            assert!((f[4] - d4).abs() < 1e-11);
        }
    }

    #[test]
    fn eigenmode_amplitudes_are_solenoidal() {
        let d = Domain::new(DomainSpec::unit_box(8, 1.0, 1.0)).unwrap();
        let a = eigenmode_amplitudes(&d, 1.0);
        assert!((a[0] + a[1] + a[2]).abs() < 1e-15);
        assert!(((a[0] * a[0] + a[1] * a[1] + a[2] * a[2]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constants_experiment_on_the_pi_square() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_json(&base_json("constants")).unwrap();
        let out = run_experiment(&cfg, Some(dir.path())).unwrap();
        assert_eq!(out.status, ExitStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ledger.json")).unwrap()).unwrap();
        assert!((v["c_p"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!((v["c_1"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(v["a"]["A1_sq"].as_f64().unwrap(), 0.0);
        let a2 = v["a"]["A2_sq"].as_f64().unwrap();
        assert!((a2 - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-12, "{a2}");
    }

    #[test]
    fn decay_with_zero_data_passes() {
        let dir = tempfile::tempdir().unwrap();
        let text = base_json("decay2d").replace(r#"{"preset":"taylor-green"}"#, r#"{"preset":"zero"}"#);
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let out = run_experiment(&cfg, Some(dir.path())).unwrap();
        assert_eq!(out.status, ExitStatus::Ok);
        let doc = out.document.unwrap();
        assert!(!doc.monitors.is_empty() && doc.all_pass());
        for f in ["trajectory.csv", "ledger.json", "monitors.json"] {
            assert!(dir.path().join(f).exists());
        }
    }

    #[test]
    fn stability_above_threshold_fails_hypothesis() {
        let gs = gamma_star(1.0, 1.0, 0.5).unwrap();
        let text = base_json("stability3d").replace(
            "\"stride\":5",
            &format!(
                "\"stride\":5,\"ledger\":{{\"c_star\":0.5}},\"gamma\":{},\
                 \"initial_3d\":{{\"preset\":\"random\",\"seed\":3,\"gamma_fraction\":0.5}}",
                2.0 * gs
            ),
        );
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let out = run_experiment(&cfg, Some(dir.path())).unwrap();
        assert_eq!(out.status, ExitStatus::MonitorFailure);
        let doc = out.document.unwrap();
        let thr = doc.hypotheses.iter().find(|r| r.id == "HYP-threshold").unwrap();
        assert!(!thr.pass);
        let verdict = fs::read_to_string(dir.path().join("verdict.txt")).unwrap();
        assert!(verdict.starts_with("STABLE(") || verdict.starts_with("VIOLATION("));
    }
}
