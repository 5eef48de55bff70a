//! Constant chains of the a priori estimates and the monitors that check
//! them against logged trajectories.
//!
//! Every monitor compares a left side with a right side and records
//! `margin = rhs - lhs`; a report passes when `margin >= -tol`. All inputs
//! come from [`TrajectoryLog`] / [`StabilityLog`] samples and the
//! [`ConstantsLedger`], so a report can be recomputed from the CSV files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::elliptic::{
    c2_constant, coercivity_c1, divcurl_constant_3d, estimate_embedding, poincare_constant, ConstantEstimate,
    ConstantName, Method,
};
use crate::error::{Error, Result};
use crate::ns2d::{Sample2D, TrajectoryLog};
use crate::ns3d::{Sample3D, StabilityLog};

fn one() -> f64 {
    1.0
}

fn default_sigma_plus() -> f64 {
    2.5
}

/// User-set parts of the ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerParams {
    /// The unnamed constant `c` of the perturbation estimates.
    #[serde(default = "one")]
    pub c_generic: f64,
    /// Coefficient of `X^6` in the vorticity inequality.
    #[serde(default = "one")]
    pub c_0: f64,
    /// Decay rate kept after absorbing the cubic term; defaults to `nu`.
    #[serde(default)]
    pub c_star: Option<f64>,
    /// Overrides the derived `c_2`.
    #[serde(default)]
    pub c_2: Option<f64>,
    #[serde(default = "default_sigma_plus")]
    pub sigma_plus: f64,
    /// Samples per randomized embedding estimate; 0 skips them.
    #[serde(default)]
    pub embedding_samples: usize,
    #[serde(default)]
    pub embedding_overrides: BTreeMap<ConstantName, f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for LedgerParams {
    fn default() -> Self {
        LedgerParams {
            c_generic: 1.0,
            c_0: 1.0,
            c_star: None,
            c_2: None,
            sigma_plus: default_sigma_plus(),
            embedding_samples: 0,
            embedding_overrides: BTreeMap::new(),
            seed: 0,
        }
    }
}

/// Base-flow constants. Squares except `A6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AConstants {
    #[serde(rename = "A1_sq")]
    pub a1_sq: f64,
    #[serde(rename = "A2_sq")]
    pub a2_sq: f64,
    #[serde(rename = "A3_sq")]
    pub a3_sq: f64,
    #[serde(rename = "A4_sq")]
    pub a4_sq: f64,
    #[serde(rename = "A5_sq")]
    pub a5_sq: f64,
    /// Measured `sup_t ||w||_{W^1_sigma}`.
    #[serde(rename = "A6")]
    pub a6: f64,
}

/// Perturbation constants (squares).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BConstants {
    #[serde(rename = "B1_sq")]
    pub b1_sq: f64,
    #[serde(rename = "B2_sq")]
    pub b2_sq: f64,
    #[serde(rename = "B3_sq")]
    pub b3_sq: f64,
    #[serde(rename = "B4_sq")]
    pub b4_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsLedger {
    pub nu: f64,
    #[serde(rename = "T")]
    pub period: f64,
    pub c_p: f64,
    pub c_1: f64,
    pub c_e: f64,
    pub c_2: f64,
    pub embeddings: Vec<ConstantEstimate>,
    pub c_generic: f64,
    pub c_0: f64,
    pub c_star: f64,
    pub sigma_plus: f64,
    pub gamma_star: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<AConstants>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<BConstants>,
}

/// `gamma_*` from `nu - (c_0/nu^3) gamma_*^4 = c_*/2`.
pub fn gamma_star(nu: f64, c_0: f64, c_star: f64) -> Result<f64> {
    if !(nu > 0.0 && c_0 > 0.0 && c_0.is_finite()) {
        return Err(Error::InvalidArgument(format!("need nu > 0 and c_0 > 0, got {nu}, {c_0}")));
    }
    if !(c_star > 0.0 && c_star <= nu) {
        return Err(Error::InvalidArgument(format!("c_star {c_star} outside (0, nu]")));
    }
    Ok((nu.powi(3) * (nu - 0.5 * c_star) / c_0).powf(0.25))
}

impl ConstantsLedger {
    pub fn new(domain: &Domain, params: &LedgerParams) -> Result<Self> {
        let nu = domain.nu();
        if !(params.c_generic > 0.0 && params.c_generic.is_finite()) {
            return Err(Error::InvalidArgument("c_generic must be positive".into()));
        }
        if !(params.sigma_plus > 2.0 && params.sigma_plus.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma_plus {} must exceed 2", params.sigma_plus)));
        }
        let c_star = params.c_star.unwrap_or(nu);
        let gamma_star = gamma_star(nu, params.c_0, c_star)?;
        let c_2 = match params.c_2 {
            Some(v) if v > 0.0 => v,
            Some(v) => return Err(Error::InvalidArgument(format!("c_2 override {v} must be positive"))),
            None => c2_constant(domain),
        };
        let mut embeddings = Vec::new();
        for name in [ConstantName::Interpolation, ConstantName::L6, ConstantName::Linf] {
            if let Some(&value) = params.embedding_overrides.get(&name) {
                embeddings.push(ConstantEstimate {
                    name,
                    value,
                    method: Method::Override,
                    samples: None,
                    seed: None,
                });
            } else if params.embedding_samples > 0 {
                embeddings.push(estimate_embedding(
                    name,
                    domain,
                    params.embedding_samples,
                    params.seed,
                    params.sigma_plus,
                )?);
            }
        }
        Ok(ConstantsLedger {
            nu,
            period: domain.period(),
            c_p: poincare_constant(domain).value,
            c_1: coercivity_c1(domain).value,
            c_e: divcurl_constant_3d(domain).value,
            c_2,
            embeddings,
            c_generic: params.c_generic,
            c_0: params.c_0,
            c_star,
            sigma_plus: params.sigma_plus,
            gamma_star,
            a: None,
            b: None,
        })
    }

    fn a5_sq(&self) -> Result<f64> {
        self.a.map(|a| a.a5_sq).ok_or(Error::MissingInput("A5"))
    }
}

/// Integral of sampled values: Simpson on uniform spacing (3/8 rule closing an
/// odd count), trapezoid otherwise.
pub fn integrate_samples(t: &[f64], f: &[f64]) -> f64 {
    let n = t.len().min(f.len());
    if n < 2 {
        return 0.0;
    }
    let h = t[1] - t[0];
    let uniform = t.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs());
    let intervals = n - 1;
    if !uniform || intervals < 2 {
        return t.windows(2).zip(f.windows(2)).map(|(tw, fw)| 0.5 * (tw[1] - tw[0]) * (fw[0] + fw[1])).sum();
    }
    let simpson = |a: usize, m: usize| -> f64 {
        // m even
        let mut s = f[a] + f[a + m];
        for j in 1..m {
            s += if j % 2 == 1 { 4.0 } else { 2.0 } * f[a + j];
        }
        s * h / 3.0
    };
    if intervals % 2 == 0 {
        simpson(0, intervals)
    } else {
        let m = intervals - 3;
        let tail = 3.0 * h / 8.0 * (f[m] + 3.0 * f[m + 1] + 3.0 * f[m + 2] + f[m + 3]);
        if m == 0 {
            tail
        } else {
            simpson(0, m) + tail
        }
    }
}

/// Running trapezoid integral, starting at 0.
pub fn cumulative_integral(t: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for i in 0..t.len() {
        if i > 0 {
            acc += 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// `k` applications of `x -> b + q x` starting from `x0`.
pub fn iterate_recursion(x0: f64, q: f64, b: f64, k: usize) -> f64 {
    (0..k).fold(x0, |x, _| b + q * x)
}

/// Iterated bound `b/(1-q) + q^k x0`.
pub fn recursion_closed_form(x0: f64, q: f64, b: f64, k: usize) -> f64 {
    b / (1.0 - q) + q.powi(k as i32) * x0
}

fn check_times(t: &[f64]) -> Result<()> {
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::IncompleteLog("sample times must increase strictly".into()));
    }
    Ok(())
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

/// Samples of interval `k`, checked to start at `kT` and close at `(k+1)T`.
fn checked_interval<S: Copy>(
    samples: &[S],
    time: impl Fn(&S) -> f64,
    label: impl Fn(&S) -> usize,
    k: usize,
    period: f64,
) -> Result<Vec<S>> {
    let mut out: Vec<S> = samples.iter().filter(|s| label(s) == k).copied().collect();
    let first = out.first().map(&time);
    match samples.iter().find(|s| label(s) == k + 1) {
        Some(end) => out.push(*end),
        None => return Err(Error::IncompleteLog(format!("no sample closes interval {k}"))),
    }
    let last = out.last().map(&time);
    if !(first.is_some_and(|t| same_time(t, k as f64 * period))
        && last.is_some_and(|t| same_time(t, (k + 1) as f64 * period)))
    {
        return Err(Error::IncompleteLog(format!("interval {k} lacks endpoint samples")));
    }
    Ok(out)
}

fn interval_range<S>(samples: &[S], label: impl Fn(&S) -> usize) -> Result<std::ops::Range<usize>> {
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => (label(a), label(b)),
        _ => return Err(Error::IncompleteLog("empty log".into())),
    };
    if last <= first {
        return Err(Error::IncompleteLog("log covers no full interval".into()));
    }
    Ok(first..last)
}

fn intervals_2d(log: &TrajectoryLog, period: f64) -> Result<Vec<(usize, Vec<Sample2D>)>> {
    let t: Vec<f64> = log.samples.iter().map(|s| s.t).collect();
    check_times(&t)?;
    interval_range(&log.samples, |s| s.k)?
        .map(|k| Ok((k, checked_interval(&log.samples, |s| s.t, |s| s.k, k, period)?)))
        .collect()
}

fn intervals_3d(log: &StabilityLog, period: f64) -> Result<Vec<(usize, Vec<Sample3D>)>> {
    let t: Vec<f64> = log.samples.iter().map(|s| s.t).collect();
    check_times(&t)?;
    interval_range(&log.samples, |s| s.k)?
        .map(|k| Ok((k, checked_interval(&log.samples, |s| s.t, |s| s.k, k, period)?)))
        .collect()
}

fn integral_of<S>(samples: &[S], t: impl Fn(&S) -> f64, f: impl Fn(&S) -> f64) -> f64 {
    let ts: Vec<f64> = samples.iter().map(&t).collect();
    let fs: Vec<f64> = samples.iter().map(f).collect();
    integrate_samples(&ts, &fs)
}

/// Base-flow constants from a logged trajectory. `w(0)` is the first sample.
pub fn compute_a(log: &TrajectoryLog, ledger: &ConstantsLedger) -> Result<AConstants> {
    let (nu, c1, cp, period) = (ledger.nu, ledger.c_1, ledger.c_p, ledger.period);
    let intervals = intervals_2d(log, period)?;
    let a1_sq = intervals
        .iter()
        .map(|(_, s)| integral_of(s, |x| x.t, |x| x.force_l2) / (nu * c1))
        .fold(0.0, f64::max);
    let w0 = log.samples[0];
    let a2_sq = a1_sq / (1.0 - (-nu * c1 * period).exp()) + w0.energy;
    let a4_sq = c1 * a1_sq / (1.0 - (-cp * nu * period).exp()) + w0.enstrophy;
    Ok(AConstants {
        a1_sq,
        a2_sq,
        a3_sq: a1_sq + a2_sq,
        a4_sq,
        a5_sq: c1 * a1_sq + a4_sq,
        a6: log.samples.iter().map(|s| s.w1sigma).fold(0.0, f64::max),
    })
}

/// Perturbation constants. Needs `A5` in the ledger.
pub fn compute_b(log: &StabilityLog, ledger: &ConstantsLedger) -> Result<BConstants> {
    let a5_sq = ledger.a5_sq()?;
    if !(log.c_generic > 0.0) {
        return Err(Error::InvalidArgument("stability log carries no positive c".into()));
    }
    let (nu, c, period) = (ledger.nu, ledger.c_generic, ledger.period);
    // G^2 = (c_log/nu) ||g||^2
    let unscale = nu / log.c_generic;
    let b1_sq = intervals_3d(log, period)?
        .iter()
        .map(|(_, s)| integral_of(s, |x| x.t, |x| x.g2 * unscale))
        .fold(0.0, f64::max);
    let growth = (c / nu * a5_sq).exp();
    let b2_sq = c / nu * growth * b1_sq;
    let b3_sq = b2_sq / (1.0 - (-0.5 * nu * period).exp()) + log.samples[0].u_l2;
    Ok(BConstants {
        b1_sq,
        b2_sq,
        b3_sq,
        b4_sq: growth * c / nu * b1_sq + b3_sq,
    })
}

/// Interval index, or a label for global reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scope {
    Interval(usize),
    Label(String),
}

impl Scope {
    pub fn global() -> Self {
        Scope::Label("global".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub id: String,
    pub k: Scope,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tol: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl MonitorReport {
    pub fn new(id: &str, k: Scope, lhs: f64, rhs: f64, tol: f64) -> Self {
        let margin = rhs - lhs;
        MonitorReport {
            id: id.to_string(),
            k,
            lhs,
            rhs,
            margin,
            tol,
            pass: margin.is_finite() && margin >= -tol,
            note: None,
        }
    }

    fn scaled(id: &str, k: Scope, lhs: f64, rhs: f64, rel_tol: f64) -> Self {
        Self::new(id, k, lhs, rhs, rel_tol * lhs.abs().max(rhs.abs()))
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Keeps the report with the smallest `margin + tol`.
fn worst(reports: impl IntoIterator<Item = MonitorReport>) -> Option<MonitorReport> {
    reports
        .into_iter()
        .min_by(|a, b| (a.margin + a.tol).total_cmp(&(b.margin + b.tol)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisInputs {
    pub gamma: f64,
    /// `||u(0)||_{H1}^2` on the cylinder.
    pub u0_h1_sq: f64,
    /// `sup_t G^2(t)`.
    pub sup_g2: f64,
    /// Include the smallness condition of the L2 perturbation bound.
    pub include_l2_lemma: bool,
}

/// Reports `HYP-decay` (optional), `HYP-data` and `HYP-threshold`.
pub fn hypothesis_checks(ledger: &ConstantsLedger, inputs: &HypothesisInputs, rel_tol: f64) -> Result<Vec<MonitorReport>> {
    let (nu, c, g) = (ledger.nu, ledger.c_generic, inputs.gamma);
    let mut out = Vec::new();
    if inputs.include_l2_lemma {
        let lhs = -0.5 * nu * ledger.period + c / nu * ledger.a5_sq()?;
        out.push(MonitorReport::new("HYP-decay", Scope::global(), lhs, 0.0, rel_tol * (0.5 * nu * ledger.period)));
    }
    out.push(
        MonitorReport::scaled("HYP-data", Scope::global(), inputs.u0_h1_sq, g, rel_tol).with_note("initial H1 size"),
    );
    out.push(
        MonitorReport::scaled("HYP-data", Scope::global(), inputs.sup_g2, 0.25 * ledger.c_star * g, rel_tol)
            .with_note("force size"),
    );
    let rhs = nu - ledger.c_0 / nu.powi(3) * g.powi(4);
    out.push(MonitorReport::scaled("HYP-threshold", Scope::global(), 0.5 * ledger.c_star, rhs, rel_tol));
    Ok(out)
}

/// Per-interval energy and enstrophy recursions, their iterates, and the
/// in-interval bounds.
pub fn monitor_recursions(log: &TrajectoryLog, ledger: &ConstantsLedger, rel_tol: f64) -> Result<Vec<MonitorReport>> {
    let a = ledger.a.ok_or(Error::MissingInput("A constants"))?;
    let (nu, c1, cp, period) = (ledger.nu, ledger.c_1, ledger.c_p, ledger.period);
    let qe = (-nu * c1 * period).exp();
    let qz = (-cp * nu * period).exp();
    let w0 = log.samples.first().ok_or(Error::IncompleteLog("empty log".into()))?;
    let k0 = w0.k;
    let mut out = Vec::new();
    let mut sup_e: f64 = 0.0;
    let mut sup_z: f64 = 0.0;
    for (k, s) in intervals_2d(log, period)? {
        let (start, end) = (s[0], s[s.len() - 1]);
        let forcing = integral_of(&s, |x| x.t, |x| x.force_l2);
        let scope = Scope::Interval(k);
        out.push(MonitorReport::scaled(
            "E-rec",
            scope.clone(),
            end.energy,
            forcing / (nu * c1) + start.energy * qe,
            rel_tol,
        ));
        out.push(MonitorReport::scaled(
            "Z-rec",
            scope.clone(),
            end.enstrophy,
            forcing / nu + start.enstrophy * qz,
            rel_tol,
        ));
        let j = k + 1 - k0;
        out.push(MonitorReport::scaled(
            "E-iter",
            scope.clone(),
            end.energy,
            recursion_closed_form(w0.energy, qe, a.a1_sq, j),
            rel_tol,
        ));
        out.push(MonitorReport::scaled(
            "Z-iter",
            scope.clone(),
            end.enstrophy,
            recursion_closed_form(w0.enstrophy, qz, c1 * a.a1_sq, j),
            rel_tol,
        ));
        sup_e = sup_e.max(start.energy).max(end.energy);
        sup_z = sup_z.max(start.enstrophy).max(end.enstrophy);

        let t: Vec<f64> = s.iter().map(|x| x.t).collect();
        let h1: Vec<f64> = s.iter().map(|x| x.h1).collect();
        let omega_h1: Vec<f64> = s.iter().map(|x| x.enstrophy + x.palinstrophy).collect();
        let h2: Vec<f64> = s.iter().map(|x| x.h2()).collect();
        let (ih1, iom, ih2) = (
            cumulative_integral(&t, &h1),
            cumulative_integral(&t, &omega_h1),
            cumulative_integral(&t, &h2),
        );
        let bound = |id: &str, lhs: &dyn Fn(usize) -> f64, rhs: f64| {
            worst((0..s.len()).map(|i| {
                MonitorReport::scaled(id, scope.clone(), lhs(i), rhs, rel_tol).with_note(format!("t={}", s[i].t))
            }))
        };
        out.extend(bound("E-bound", &|i| s[i].energy + nu * c1 * ih1[i], a.a3_sq));
        out.extend(bound("Z-bound", &|i| s[i].enstrophy + nu * c1 * iom[i], a.a5_sq));
        out.extend(bound("H1-bound", &|i| s[i].h1 + nu * cp * ih2[i], ledger.c_2 * a.a5_sq));
    }
    out.push(MonitorReport::scaled("E-sup", Scope::global(), sup_e, a.a2_sq, rel_tol));
    out.push(MonitorReport::scaled("Z-sup", Scope::global(), sup_z, a.a4_sq, rel_tol));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityChecks {
    pub gamma: f64,
    pub rel_tol: f64,
    /// Also check the L2 perturbation recursion and bound.
    pub check_l2_lemma: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityOutcome {
    pub reports: Vec<MonitorReport>,
    /// Smallest `c_0` for which the vorticity inequality holds at every
    /// interior sample; `None` when `X` vanishes throughout.
    pub empirical_c0: Option<f64>,
    pub sup_x2: f64,
    pub sup_u_h1: f64,
    /// First sample time with `X^2 > gamma`.
    pub violation: Option<f64>,
}

/// Centered derivative on a nonuniform stencil plus an estimate of its
/// truncation error from neighbouring third differences.
fn derivative_with_error(t: &[f64], f: &[f64], i: usize) -> (f64, f64) {
    let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
    let d = -h2 / (h1 * (h1 + h2)) * f[i - 1] + (h2 - h1) / (h1 * h2) * f[i] + h1 / (h2 * (h1 + h2)) * f[i + 1];
    let third = |j: usize| -> Option<f64> {
        if j + 3 >= t.len() {
            return None;
        }
        let dd = |a: usize, b: usize| (f[b] - f[a]) / (t[b] - t[a]);
        let d2 = |a: usize| (dd(a + 1, a + 2) - dd(a, a + 1)) / (t[a + 2] - t[a]);
        Some(6.0 * (d2(j + 1) - d2(j)) / (t[j + 3] - t[j]))
    };
    let f3 = [i.checked_sub(2).and_then(third), third(i - 1)]
        .into_iter()
        .flatten()
        .map(f64::abs)
        .fold(0.0, f64::max);
    (d, h1 * h2 / 6.0 * f3)
}

const MIN_SAMPLES_PER_INTERVAL: usize = 5;

/// Stability monitors over a coupled run: the `X^2 <= gamma` bound, the
/// vorticity differential inequality with empirical `c_0`, its transformed
/// form for `Z^2`, and optionally the L2 recursion and bound.
pub fn monitor_stability(log: &StabilityLog, ledger: &ConstantsLedger, checks: &StabilityChecks) -> Result<StabilityOutcome> {
    let (nu, period) = (ledger.nu, ledger.period);
    let intervals = intervals_3d(log, period)?;
    if intervals.iter().any(|(_, s)| s.len() < MIN_SAMPLES_PER_INTERVAL) {
        return Err(Error::IncompleteLog(format!(
            "insufficient sampling density: need {MIN_SAMPLES_PER_INTERVAL} samples per interval"
        )));
    }
    let rel = checks.rel_tol;
    let gamma = checks.gamma;
    let mut reports = Vec::new();
    let sup_x2 = log.samples.iter().map(|s| s.x2).fold(0.0, f64::max);
    let sup_u_h1 = log.samples.iter().map(|s| s.u_h1).fold(0.0, f64::max);
    let violation = log.samples.iter().find(|s| s.x2 > gamma).map(|s| s.t);
    reports.push(MonitorReport::new("H1-stab", Scope::global(), sup_x2, gamma, rel * gamma));

    if checks.check_l2_lemma {
        let b = ledger.b.ok_or(Error::MissingInput("B constants"))?;
        let q = (-0.5 * nu * period).exp();
        for (k, s) in &intervals {
            let (start, end) = (s[0], s[s.len() - 1]);
            reports.push(MonitorReport::scaled("L2-stab-rec", Scope::Interval(*k), end.u_l2, b.b2_sq + q * start.u_l2, rel));
        }
        let sup_l2 = log.samples.iter().map(|s| s.u_l2).fold(0.0, f64::max);
        reports.push(MonitorReport::scaled("L2-stab", Scope::global(), sup_l2, b.b4_sq, rel));
    }

    let t: Vec<f64> = log.samples.iter().map(|s| s.t).collect();
    let x2: Vec<f64> = log.samples.iter().map(|s| s.x2).collect();
    let mut empirical: Option<f64> = None;
    let mut ode: BTreeMap<usize, Vec<MonitorReport>> = BTreeMap::new();
    let mut zode: BTreeMap<usize, Vec<MonitorReport>> = BTreeMap::new();
    // running integral of A^2 from the start of each interval
    let mut int_a2 = vec![0.0; t.len()];
    for i in 1..t.len() {
        let s = &log.samples[i];
        let prev = &log.samples[i - 1];
        let step = 0.5 * (t[i] - t[i - 1]) * (s.a2 + prev.a2);
        int_a2[i] = if prev.k == s.k { int_a2[i - 1] + step } else { 0.0 };
    }
    for i in 1..t.len().saturating_sub(1) {
        let s = log.samples[i];
        let (d, fd_err) = derivative_with_error(&t, &x2, i);
        let x6 = s.x2.powi(3);
        let lhs = d + nu * s.y2;
        let rhs = ledger.c_0 / nu.powi(3) * x6 + s.a2 * s.x2 + s.g2;
        let tol = rel * lhs.abs().max(rhs.abs()) + fd_err;
        let note = format!("t={}", s.t);
        ode.entry(s.k)
            .or_default()
            .push(MonitorReport::new("ODE", Scope::Interval(s.k), lhs, rhs, tol).with_note(note.clone()));
        if x6 > 0.0 {
            let c0 = nu.powi(3) * (lhs - s.a2 * s.x2 - s.g2) / x6;
            empirical = Some(empirical.map_or(c0, |e| e.max(c0)));
        }
        if s.x2 <= gamma {
            let damp = (-int_a2[i]).exp();
            let zl = damp * (d - s.a2 * s.x2);
            let zr = damp * (-0.5 * ledger.c_star * s.x2 + s.g2);
            let ztol = rel * zl.abs().max(zr.abs()) + damp * fd_err;
            zode.entry(s.k)
                .or_default()
                .push(MonitorReport::new("Z-ODE", Scope::Interval(s.k), zl, zr, ztol).with_note(note));
        }
    }
    reports.extend(ode.into_values().filter_map(worst));
    reports.extend(zode.into_values().filter_map(worst));
    Ok(StabilityOutcome {
        reports,
        empirical_c0: empirical,
        sup_x2,
        sup_u_h1,
        violation,
    })
}

/// Empirical `c_0` values agree when they share a sign and their ratio
/// lies in `[1/2, 2]`.
pub fn c0_consistent(a: f64, b: f64) -> bool {
    if a == 0.0 || b == 0.0 {
        return a == b;
    }
    let r = a / b;
    (0.5..=2.0).contains(&r)
}

/// Serialized ledger and monitor results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorDocument {
    pub constants: ConstantsLedger,
    pub hypotheses: Vec<MonitorReport>,
    pub monitors: Vec<MonitorReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_c0: Option<f64>,
}

impl MonitorDocument {
    pub fn all_pass(&self) -> bool {
        self.hypotheses.iter().chain(&self.monitors).all(|r| r.pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit(nu: f64) -> Domain {
        Domain::new(DomainSpec::unit_box(8, nu, 1.0)).unwrap()
    }

    fn ledger(nu: f64) -> ConstantsLedger {
        ConstantsLedger::new(&unit(nu), &LedgerParams::default()).unwrap()
    }

    fn sample2(t: f64, k: usize, energy: f64, enstrophy: f64, force_l2: f64) -> Sample2D {
        Sample2D {
            t,
            k,
            energy,
            h1: energy + enstrophy,
            enstrophy,
            palinstrophy: 2.0 * enstrophy,
            w1sigma: energy.sqrt(),
            force_l2,
            force_lsigma: 0.0,
        }
    }

    /// Uniform samples over `k_max` unit intervals, `per` steps each.
    fn log2(k_max: usize, per: usize, f: impl Fn(f64) -> (f64, f64, f64)) -> TrajectoryLog {
        let mut samples = Vec::new();
        for k in 0..k_max {
            for j in 0..per {
                let t = k as f64 + j as f64 / per as f64;
                let (e, z, h) = f(t);
                samples.push(sample2(t, k, e, z, h));
            }
        }
        let (e, z, h) = f(k_max as f64);
        samples.push(sample2(k_max as f64, k_max, e, z, h));
        TrajectoryLog { samples }
    }

    fn sample3(t: f64, k: usize, x2: f64, g2: f64, a2: f64) -> Sample3D {
        Sample3D { t, k, x2, y2: 2.0 * x2, u_l2: 0.5 * x2, u_h1: 1.5 * x2, g2, a2 }
    }

    fn log3(k_max: usize, per: usize, c: f64, f: impl Fn(f64) -> (f64, f64, f64)) -> StabilityLog {
        let mut samples = Vec::new();
        for k in 0..=k_max {
            let count = if k == k_max { 1 } else { per };
            for j in 0..count {
                let t = k as f64 + j as f64 / per as f64;
                let (x, g, a) = f(t);
                samples.push(sample3(t, k, x, g, a));
            }
        }
        StabilityLog { samples, c_generic: c }
    }

    #[test]
    fn closed_form_constants_on_the_pi_box() {
        let l = ledger(1.0);
        assert!((l.c_p - 2f64.sqrt()).abs() < 1e-15);
        assert!((l.c_1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((l.c_e - 1.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(l.c_star, 1.0);
        assert!(l.embeddings.is_empty());
    }

    #[test]
    fn gamma_star_examples() {
        assert!((gamma_star(1.0, 1.0, 1.0).unwrap() - 0.5f64.powf(0.25)).abs() < 1e-15);
        assert!((gamma_star(1.0, 1.0, 1.0).unwrap() - 0.8409).abs() < 1e-4);
        assert!(gamma_star(1.0, 1.0, 1.5).is_err());
        assert!(gamma_star(1.0, 0.0, 1.0).is_err());
        assert!(ConstantsLedger::new(&unit(1.0), &LedgerParams { c_star: Some(2.0), ..Default::default() }).is_err());
    }

    proptest! {
        #[test]
        fn gamma_star_monotonicity(nu in 0.05f64..5.0, c0 in 0.1f64..10.0, frac in 0.05f64..1.0, bump in 1.01f64..2.0) {
            let cs = frac * nu;
            let g = gamma_star(nu, c0, cs).unwrap();
            prop_assert!(gamma_star(nu * bump, c0, cs).unwrap() > g);
            prop_assert!(gamma_star(nu, c0 * bump, cs).unwrap() < g);
            if cs * bump <= nu {
                prop_assert!(gamma_star(nu, c0, cs * bump).unwrap() < g);
            }
        }

        #[test]
        fn recursion_iterates_match_geometric_sum(x0 in 0.0f64..10.0, q in 0.01f64..0.99, b in 0.0f64..5.0, k in 0usize..40) {
            let it = iterate_recursion(x0, q, b, k);
            let exact = b * (1.0 - q.powi(k as i32)) / (1.0 - q) + q.powi(k as i32) * x0;
            prop_assert!((it - exact).abs() <= 1e-12 * exact.abs().max(1e-300));
            prop_assert!(it <= recursion_closed_form(x0, q, b, k) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sample_integration_rules() {
        let cubic = |t: f64| 1.0 + t - 2.0 * t * t + t.powi(3);
        let exact = |t: f64| t + t * t / 2.0 - 2.0 * t.powi(3) / 3.0 + t.powi(4) / 4.0;
        for n in [2usize, 3, 4, 5, 7, 10] {
            let t: Vec<f64> = (0..=n).map(|j| j as f64 * 0.3).collect();
            let f: Vec<f64> = t.iter().map(|&x| cubic(x)).collect();
            let got = integrate_samples(&t, &f);
            assert!((got - exact(t[n])).abs() < 1e-12, "n={n}");
        }
        let t = [0.0, 0.1, 0.3];
        assert!((integrate_samples(&t, &[1.0, 1.0, 1.0]) - 0.3).abs() < 1e-15);
        assert_eq!(cumulative_integral(&[0.0, 1.0, 3.0], &[2.0, 2.0, 2.0]), vec![0.0, 2.0, 6.0]);
    }

    #[test]
    fn a_constants_without_forcing() {
        let l = ledger(1.0);
        let log = log2(2, 10, |t| ((-t).exp(), 2.0 * (-t).exp(), 0.0));
        let a = compute_a(&log, &l).unwrap();
        assert_eq!(a.a1_sq, 0.0);
        assert_eq!(a.a2_sq, 1.0);
        assert_eq!(a.a3_sq, 1.0);
        assert_eq!(a.a4_sq, 2.0);
        assert_eq!(a.a5_sq, 2.0);
        assert_eq!(a.a6, 1.0);
    }

    #[test]
    fn a1_for_constant_force_norm() {
        let nu = 0.5;
        let l = ledger(nu);
        let f = 0.7;
        let log = log2(3, 8, |_| (1.0, 1.0, f));
        let a = compute_a(&log, &l).unwrap();
        let expected = f * 1.0 / (nu * (2.0 / 3.0));
        assert!((a.a1_sq - expected).abs() < 1e-14 * expected);
    }

    #[test]
    fn a4_for_taylor_green_start() {
        // omega = 2 sin x1 sin x2 on (0, pi)^2: midpoint quadrature of omega^2
        let n = 400;
        let h = PI / n as f64;
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                q += (2.0 * x.sin() * y.sin()).powi(2) * h * h;
            }
        }
        let d = unit(1.0);
        let st = crate::ns2d::init_2d(&d, &crate::ns2d::Initial2D::TaylorGreen { amplitude: 1.0 }).unwrap();
        let f = crate::forcing::Forcing2D::resolve(&d, &crate::forcing::ForcingSpec::zero()).unwrap();
        let s0 = crate::ns2d::sample_2d(&d, 0.0, 0, &st.w, &f.at(0.0), 4.0).unwrap();
        let mut s1 = s0;
        s1.t = 1.0;
        s1.k = 1;
        let a = compute_a(&TrajectoryLog { samples: vec![s0, s1] }, &ledger(1.0)).unwrap();
        assert!((a.a4_sq - q).abs() < 1e-9);
        assert!((a.a4_sq - PI * PI).abs() < 1e-12);
    }

    #[test]
    fn incomplete_logs_are_rejected() {
        let l = ledger(1.0);
        let mut log = log2(1, 4, |_| (1.0, 1.0, 0.0));
        log.samples.pop();
        assert!(matches!(compute_a(&log, &l), Err(Error::IncompleteLog(_))));
        let mut shifted = log2(1, 4, |_| (1.0, 1.0, 0.0));
        shifted.samples[0].t = 0.1;
        assert!(compute_a(&shifted, &l).is_err());
        let mut l2 = l.clone();
        l2.a = None;
        assert!(matches!(monitor_recursions(&log2(1, 4, |_| (1.0, 1.0, 0.0)), &l2, 1e-8), Err(Error::MissingInput(_))));
    }

    #[test]
    fn b_constants() {
        let mut l = ledger(1.0);
        let log = log3(2, 10, 1.0, |_| (0.3, 0.0, 0.0));
        assert!(matches!(compute_b(&log, &l), Err(Error::MissingInput("A5"))));
        l.a = Some(AConstants { a1_sq: 0.0, a2_sq: 0.0, a3_sq: 0.0, a4_sq: 0.0, a5_sq: 0.0, a6: 0.0 });
        let b = compute_b(&log, &l).unwrap();
        assert_eq!((b.b1_sq, b.b2_sq), (0.0, 0.0));
        assert_eq!(b.b3_sq, 0.15);
        // G^2 = (c/nu) ||g||^2 with ||g||^2 = 0.4
        let g0 = 0.4;
        let forced = log3(2, 10, 2.0, |_| (0.3, 2.0 * g0, 0.0));
        let b = compute_b(&forced, &l).unwrap();
        assert!((b.b1_sq - g0).abs() < 1e-15);
        let mut l2 = l.clone();
        l2.c_generic = 2.0;
        let b2 = compute_b(&forced, &l2).unwrap();
        assert!((b2.b2_sq - 2.0 * b.b2_sq).abs() < 1e-15);
    }

    #[test]
    fn hypothesis_examples() {
        let mut l = ledger(1.0);
        l.a = Some(AConstants { a1_sq: 0.0, a2_sq: 0.0, a3_sq: 0.0, a4_sq: 0.0, a5_sq: 0.0, a6: 0.0 });
        let gs = l.gamma_star;
        let inputs = HypothesisInputs { gamma: gs, u0_h1_sq: gs / 2.0, sup_g2: 0.0, include_l2_lemma: true };
        let reps = hypothesis_checks(&l, &inputs, 1e-12).unwrap();
        assert_eq!(reps.len(), 4);
        assert!(reps.iter().all(|r| r.pass), "{reps:?}");
        let bad = hypothesis_checks(&l, &HypothesisInputs { gamma: 2.0 * gs, ..inputs }, 1e-12).unwrap();
        let thr = bad.iter().find(|r| r.id == "HYP-threshold").unwrap();
        assert!(!thr.pass && thr.margin < 0.0);
        l.period = 1e-6;
        let tiny = hypothesis_checks(&l, &inputs, 1e-12).unwrap();
        assert!(tiny[0].pass);
    }

    #[test]
    fn zero_trajectory_margins_equal_rhs() {
        let mut l = ledger(1.0);
        let log = log2(3, 5, |_| (0.0, 0.0, 0.0));
        l.a = Some(compute_a(&log, &l).unwrap());
        let reps = monitor_recursions(&log, &l, 1e-8).unwrap();
        assert!(reps.iter().all(|r| r.pass && r.margin == r.rhs && r.rhs >= 0.0));
        let s = log3(2, 10, 1.0, |_| (0.0, 0.0, 0.0));
        let out = monitor_stability(&s, &l, &StabilityChecks { gamma: 0.5, rel_tol: 1e-8, check_l2_lemma: false }).unwrap();
        assert!(out.reports.iter().all(|r| r.pass && r.margin == r.rhs && r.rhs >= 0.0));
        assert_eq!(out.empirical_c0, None);
    }

    #[test]
    fn decay_passes_stability_monitors() {
        let l = ledger(1.0);
        // X^2 = 0.3 e^{-4t}, Y^2 = 2 X^2: dX^2/dt + Y^2 = -2 X^2
        let log = log3(2, 50, 1.0, |t| (0.3 * (-4.0 * t).exp(), 0.0, 0.0));
        let out = monitor_stability(&log, &l, &StabilityChecks { gamma: 0.3, rel_tol: 1e-8, check_l2_lemma: false }).unwrap();
        assert!(out.reports.iter().all(|r| r.pass), "{:?}", out.reports);
        assert_eq!(out.violation, None);
        let c0 = out.empirical_c0.unwrap();
        // nu^3 (-2 X^2) / X^6 is largest where X is largest
        let x2_first = 0.3 * (-4.0f64 * 0.02).exp();
        assert!((c0 + 2.0 / (x2_first * x2_first)).abs() < 5e-3 * c0.abs());
        let sparse = log3(2, 3, 1.0, |_| (0.1, 0.0, 0.0));
        assert!(monitor_stability(&sparse, &l, &StabilityChecks { gamma: 0.3, rel_tol: 1e-8, check_l2_lemma: false }).is_err());
    }

    #[test]
    fn growth_is_flagged() {
        let l = ledger(1.0);
        let log = log3(1, 50, 1.0, |t| (0.1 * (3.0 * t).exp(), 0.0, 0.0));
        let out = monitor_stability(&log, &l, &StabilityChecks { gamma: 0.5, rel_tol: 1e-8, check_l2_lemma: false }).unwrap();
        let h1 = out.reports.iter().find(|r| r.id == "H1-stab").unwrap();
        assert!(!h1.pass);
        assert!((out.violation.unwrap() - 0.54).abs() < 1e-12);
        assert!(out.reports.iter().any(|r| r.id == "ODE" && !r.pass));
    }

    #[test]
    fn finite_difference_error_estimate() {
        let t: Vec<f64> = (0..20).map(|j| j as f64 * 0.05).collect();
        let f: Vec<f64> = t.iter().map(|x| x.sin()).collect();
        for i in 2..17 {
            let (d, err) = derivative_with_error(&t, &f, i);
            let actual = (d - t[i].cos()).abs();
            assert!(actual <= 1.5 * err + 1e-14, "{i} {actual} {err}");
        }
    }

    #[test]
    fn c0_consistency_rule() {
        assert!(c0_consistent(-3.0, -2.0));
        assert!(!c0_consistent(-3.0, 2.0));
        assert!(!c0_consistent(5.0, 2.0));
        assert!(c0_consistent(0.0, 0.0));
    }

    #[test]
    fn document_json_shape() {
        let doc = MonitorDocument {
            constants: ledger(1.0),
            hypotheses: vec![],
            monitors: vec![MonitorReport::new("E-rec", Scope::Interval(0), 1.0, 2.0, 0.0), MonitorReport::new("H1-stab", Scope::global(), 1.0, 2.0, 0.0)],
            empirical_c0: None,
        };
        let v: serde_json::Value = serde_json::to_value(&doc).unwrap();
        assert_eq!(v["monitors"][0]["k"], 0);
        assert_eq!(v["monitors"][1]["k"], "global");
        assert_eq!(v["constants"]["T"], 1.0);
        let back: MonitorDocument = serde_json::from_value(v).unwrap();
        assert_eq!(back, doc);
    }
}
