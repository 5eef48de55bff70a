//! Perturbation `u = v - w` of a 2D base flow in the cylinder:
//! `u_t = P[-u.grad u - w.grad u - u.grad w + g] + nu Delta u`, stepped in
//! lockstep with the base flow.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array3, Ix2, Ix3, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Grid};
use crate::error::{Error, Result};
use crate::fields::{
    divergence3, norm, rot3, rot3_vorticity, GridVector, NormKind, Spectral, SpectralField, Velocity2D,
    Velocity3D,
};
use crate::forcing::{Forcing2D, Forcing3D};
use crate::integrator::{apply_factor, if_rk3, DecayTable, Factor, Stage};
use crate::ns2d::{
    cfl_number, fmt_f64, initial_velocity_2d, interval_steps, sample_2d, Initial2D, State2D, Stepper2D,
    TrajectoryLog,
};

/// Per-mode orthogonal projection onto divergence-free fields,
/// `u <- u - kappa (kappa . u) / |kappa|^2`.
pub fn leray_project(domain: &Domain, u: &Velocity3D) -> Velocity3D {
    let mut out = u.clone();
    let [a, b, c] = &mut out.u;
    let k: [&Vec<f64>; 3] = [&domain.axis(0).kappa, &domain.axis(1).kappa, &domain.axis(2).kappa];
    Zip::indexed(a).and(b).and(c).for_each(|(i, j, l), x, y, z| {
        let kv = [k[0][i], k[1][j], k[2][l]];
        let lam = kv[0] * kv[0] + kv[1] * kv[1] + kv[2] * kv[2];
        if lam > 0.0 {
            let dot = (kv[0] * *x + kv[1] * *y + kv[2] * *z) / lam;
            *x -= kv[0] * dot;
            *y -= kv[1] * dot;
            *z -= kv[2] * dot;
        }
    });
    out
}

/// x3-independent 3D field `(w1, w2, 0)`.
pub fn embed_2d_in_3d(domain: &Domain, w: &Velocity2D) -> Result<Velocity3D> {
    let expected = domain.modal_shape(2);
    if w.psi.shape() != expected.as_slice() {
        return Err(Error::ShapeMismatch {
            expected,
            actual: w.psi.shape().to_vec(),
        });
    }
    let vel = w.velocity(domain);
    let mut u = Velocity3D::zeros(domain);
    for c in 0..2 {
        u.u[c]
            .index_axis_mut(ndarray::Axis(2), 0)
            .assign(&vel[c].coeffs);
    }
    Ok(u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentMode {
    /// 1-based velocity component.
    pub component: usize,
    pub mode: Vec<usize>,
    pub value: f64,
}

fn default_mode() -> Vec<usize> {
    vec![1, 1, 1]
}

/// Initial perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Initial3D {
    Zero,
    /// Single divergence-free mode with component amplitudes `a`.
    Eigenmode {
        a: [f64; 3],
        #[serde(default = "default_mode")]
        mode: Vec<usize>,
    },
    /// A 2D state placed on axial mode 0.
    Embedded { base: Initial2D },
    /// Random projected field scaled to `||u||_{H1}^2 = h1_sq`, or to
    /// `gamma_fraction * gamma` when the threshold is known.
    Random {
        seed: u64,
        #[serde(default)]
        h1_sq: Option<f64>,
        #[serde(default)]
        gamma_fraction: Option<f64>,
        #[serde(default)]
        band: Option<usize>,
    },
    /// Explicit coefficients, projected afterwards.
    Modes { modes: Vec<ComponentMode> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct State3D {
    pub t: f64,
    pub k: usize,
    pub u: Velocity3D,
}

fn check_band(domain: &Domain, u: &Velocity3D) -> Result<()> {
    let cut = domain.cutoffs(3);
    for comp in &u.u {
        for ((i, j, l), v) in comp.indexed_iter() {
            if *v != 0.0 {
                for (m, c) in [(i, cut[0]), (j, cut[1]), (l, cut[2])] {
                    if m > c {
                        return Err(Error::ModeOutOfRange { mode: m, cutoff: c });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Builds the initial perturbation. `gamma` resolves `gamma_fraction`.
pub fn init_3d(domain: &Domain, init: &Initial3D, gamma: Option<f64>) -> Result<State3D> {
    let shape = domain.modal_shape(3);
    let u = match init {
        Initial3D::Zero => Velocity3D::zeros(domain),
        Initial3D::Eigenmode { a, mode } => {
            if mode.len() != 3 || (0..3).any(|k| mode[k] >= shape[k]) {
                return Err(Error::InvalidArgument(format!("bad eigenmode index {mode:?}")));
            }
            let mut u = Velocity3D::zeros(domain);
            let m = [mode[0], mode[1], mode[2]];
            for c in 0..3 {
                if m[c] > 0 {
                    u.u[c][m] = a[c];
                } else if a[c] != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "component {} vanishes for mode {mode:?}",
                        c + 1
                    )));
                }
            }
            let div = divergence3(domain, &u).max_abs();
            let scale = (0..3).map(|c| domain.kappa(c, m[c]) * a[c].abs()).sum::<f64>();
            if div > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidArgument(format!(
                    "eigenmode {a:?} at {mode:?} is not divergence-free"
                )));
            }
            u
        }
        Initial3D::Embedded { base } => embed_2d_in_3d(domain, &initial_velocity_2d(domain, base)?)?,
        Initial3D::Random { seed, h1_sq, gamma_fraction, band } => {
            let target = match (h1_sq, gamma_fraction) {
                (Some(h), None) => *h,
                (None, Some(f)) => {
                    let g = gamma.ok_or(Error::MissingInput("gamma for gamma_fraction"))?;
                    f * g
                }
                _ => {
                    return Err(Error::Config(
                        "random perturbation needs exactly one of h1_sq, gamma_fraction".into(),
                    ))
                }
            };
            if !(target.is_finite() && target >= 0.0) {
                return Err(Error::InvalidArgument(format!("bad perturbation size {target}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let r = leray_project(domain, &Velocity3D::random(domain, &mut rng, band.unwrap_or(usize::MAX)));
            let h = norm(domain, &r, NormKind::H1)?.powi(2);
            if h > 0.0 {
                r.scaled((target / h).sqrt())
            } else {
                r
            }
        }
        Initial3D::Modes { modes } => {
            let mut u = Velocity3D::zeros(domain);
            for cm in modes {
                if cm.component == 0 || cm.component > 3 || cm.mode.len() != 3 {
                    return Err(Error::InvalidArgument(format!("bad mode entry {cm:?}")));
                }
                let m = [cm.mode[0], cm.mode[1], cm.mode[2]];
                if (0..3).any(|k| m[k] >= shape[k]) || m[cm.component - 1] == 0 {
                    return Err(Error::InvalidArgument(format!("mode {:?} not admissible", cm.mode)));
                }
                u.u[cm.component - 1][m] += cm.value;
            }
            leray_project(domain, &u)
        }
    };
    check_band(domain, &u)?;
    Ok(State3D { t: 0.0, k: 0, u })
}

/// Base flow and perturbation advanced together.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupled {
    pub w: Velocity2D,
    pub u: Velocity3D,
}

impl Stage for Velocity3D {
    type Tables = DecayTable<Ix3>;

    fn axpy(&mut self, alpha: f64, other: &Self) {
        Velocity3D::axpy(self, alpha, other);
    }

    fn apply(&mut self, tables: &Self::Tables, which: Factor) {
        for a in self.u.iter_mut() {
            apply_factor(a, tables, which);
        }
    }
}

impl Stage for Coupled {
    type Tables = (DecayTable<Ix2>, DecayTable<Ix3>);

    fn axpy(&mut self, alpha: f64, other: &Self) {
        self.w.axpy(alpha, &other.w);
        Stage::axpy(&mut self.u, alpha, &other.u);
    }

    fn apply(&mut self, tables: &Self::Tables, which: Factor) {
        self.w.apply(&tables.0, which);
        self.u.apply(&tables.1, which);
    }
}

/// Explicit part of the perturbation equation,
/// `P[P_M(-(u + w).grad u - u.grad w) + g]`.
pub(crate) fn rhs_3d(
    domain: &Domain,
    u: &Velocity3D,
    w: &Velocity3D,
    g: &Velocity3D,
    cfl: Option<(f64, f64)>,
) -> Result<Velocity3D> {
    let uc = u.components(domain);
    let wc = w.components(domain);
    let ug = GridVector::from_spectral(domain, &uc, Grid::Product)?;
    let wg = GridVector::from_spectral(domain, &wc, Grid::Product)?;
    let mut ag = ug.clone();
    for (a, b) in ag.values.iter_mut().zip(&wg.values) {
        *a += b;
    }
    if let Some((t, dt)) = cfl {
        let max = ag.max_abs();
        if max.iter().any(|m| !m.is_finite()) {
            return Err(Error::BlowUp { t });
        }
        let number = cfl_number(domain, &max, dt);
        if number > 1.0 {
            return Err(Error::Cfl { t, dt, number });
        }
    }
    let w_zero = w.u.iter().all(|a| a.iter().all(|v| *v == 0.0));
    let mut out = Velocity3D::zeros(domain);
    for i in 0..3 {
        let mut acc = Array3::<f64>::zeros(ug.values[0].raw_dim());
        for j in 0..3 {
            let du = uc[i].derivative(domain, j).to_grid(domain, Grid::Product)?;
            Zip::from(&mut acc).and(&ag.values[j]).and(&du).for_each(|s, &a, &d| *s += a * d);
            if !w_zero && j < 2 {
                // w is independent of x3
                let dw = wc[i].derivative(domain, j).to_grid(domain, Grid::Product)?;
                Zip::from(&mut acc).and(&ug.values[j]).and(&dw).for_each(|s, &a, &d| *s += a * d);
            }
        }
        let mut n = Spectral::from_grid(domain, &acc, uc[i].parity.clone(), Grid::Product)?;
        domain.dealias(&mut n.coeffs);
        out.u[i] = n.coeffs.mapv(|v| -v);
    }
    out.axpy(1.0, g);
    Ok(leray_project(domain, &out))
}

/// Lockstep integrator for the coupled system.
pub struct Stepper3D<'a> {
    domain: &'a Domain,
    base: Stepper2D<'a>,
    forcing: &'a Forcing3D,
    tables: (DecayTable<Ix2>, DecayTable<Ix3>),
    dt: f64,
}

impl<'a> Stepper3D<'a> {
    pub fn new(domain: &'a Domain, h: &'a Forcing2D, g: &'a Forcing3D, dt: f64) -> Result<Self> {
        let base = Stepper2D::new(domain, h, dt)?;
        let s = domain.modal_shape(3);
        let t3 = DecayTable::new(domain, Ix3(s[0], s[1], s[2]), domain.nu(), dt);
        Ok(Stepper3D {
            domain,
            tables: (base.tables().clone(), t3),
            base,
            forcing: g,
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances the pair from `t`; `observer` sees each stage perturbation.
    pub fn advance(
        &self,
        y: &Coupled,
        t: f64,
        observer: &mut dyn FnMut(&Velocity3D, f64),
    ) -> Result<Coupled> {
        let next = if_rk3(
            y,
            t,
            self.dt,
            &self.tables,
            &mut |s: &Coupled, ts, stage| {
                let kw = self.base.rhs(&s.w, ts, stage)?;
                let w3 = embed_2d_in_3d(self.domain, &s.w)?;
                let cfl = (stage == 1).then_some((ts, self.dt));
                let ku = rhs_3d(self.domain, &s.u, &w3, &self.forcing.at(ts), cfl)?;
                Ok(Coupled { w: kw, u: ku })
            },
            &mut |s: &Coupled, ts| observer(&s.u, ts),
        )?;
        if !next.u.is_finite() || next.w.psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t: t + self.dt });
        }
        Ok(next)
    }
}

/// Step at which the CFL number of `u` alone reaches 1.
pub fn cfl_limit_3d(domain: &Domain, u: &Velocity3D) -> Result<f64> {
    let grids = GridVector::from_spectral(domain, &u.components(domain), Grid::Product)?;
    let rate = cfl_number(domain, &grids.max_abs(), 1.0);
    Ok(if rate > 0.0 { 1.0 / rate } else { f64::INFINITY })
}

fn check_sync(u: &State3D, w: &State2D) -> Result<()> {
    if u.t != w.t || u.k != w.k {
        return Err(Error::Desynchronized {
            base: w.t,
            perturbation: u.t,
        });
    }
    Ok(())
}

/// One coupled step; returns the advanced perturbation and base flow.
pub fn step_3d(
    domain: &Domain,
    u: &State3D,
    w: &State2D,
    h: &Forcing2D,
    g: &Forcing3D,
    dt: f64,
) -> Result<(State3D, State2D)> {
    check_sync(u, w)?;
    let stepper = Stepper3D::new(domain, h, g, dt)?;
    let next = stepper.advance(&Coupled { w: w.w.clone(), u: u.u.clone() }, u.t, &mut |_, _| {})?;
    let t = u.t + dt;
    Ok((
        State3D { t, k: u.k, u: next.u },
        State2D::new(domain, next.w, t, w.k),
    ))
}

/// One row of the stability log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample3D {
    pub t: f64,
    pub k: usize,
    /// `X^2 = ||rot u||^2`
    #[serde(rename = "X2")]
    pub x2: f64,
    /// `Y^2 = ||rot^2 u||^2`
    #[serde(rename = "Y2")]
    pub y2: f64,
    /// `||u||^2`
    #[serde(rename = "uL2")]
    pub u_l2: f64,
    /// `||u||_{H1}^2`
    #[serde(rename = "uH1")]
    pub u_h1: f64,
    /// `G^2 = (c/nu) ||g||^2`
    #[serde(rename = "G2")]
    pub g2: f64,
    /// `A^2 = (c/nu) ||w||_{W^1_{sigma+}}^2`
    #[serde(rename = "A2")]
    pub a2: f64,
}

pub const STABILITY_COLUMNS: [&str; 8] = ["t", "k", "X2", "Y2", "uL2", "uH1", "G2", "A2"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StabilityLog {
    pub samples: Vec<Sample3D>,
    /// The generic constant `c` used in `G^2` and `A^2`.
    pub c_generic: f64,
}

impl StabilityLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(STABILITY_COLUMNS)?;
        for s in &self.samples {
            w.write_record([
                fmt_f64(s.t),
                s.k.to_string(),
                fmt_f64(s.x2),
                fmt_f64(s.y2),
                fmt_f64(s.u_l2),
                fmt_f64(s.u_h1),
                fmt_f64(s.g2),
                fmt_f64(s.a2),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, c_generic: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let samples = r.deserialize().collect::<std::result::Result<Vec<Sample3D>, _>>()?;
        Ok(StabilityLog { samples, c_generic })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path, c_generic: f64) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, c_generic)
    }

    /// Samples of interval `k` plus the closing sample at `(k+1)T`.
    pub fn interval(&self, k: usize) -> Vec<Sample3D> {
        let mut out: Vec<Sample3D> = self.samples.iter().filter(|s| s.k == k).copied().collect();
        if let Some(end) = self.samples.iter().find(|s| s.k == k + 1) {
            out.push(*end);
        }
        out
    }

    pub fn intervals(&self) -> usize {
        self.samples.iter().map(|s| s.k).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilitySettings {
    pub k_max: usize,
    pub dt: f64,
    pub stride: usize,
    /// Exponent of the base-flow `W^1_sigma` norm logged in the 2D trajectory.
    pub sigma: f64,
    /// Exponent `2+` of `A^2`.
    pub sigma_plus: f64,
    pub c_generic: f64,
}

pub(crate) fn sample_3d(
    domain: &Domain,
    t: f64,
    k: usize,
    u: &Velocity3D,
    w: &Velocity2D,
    g: &Velocity3D,
    s: &StabilitySettings,
) -> Result<Sample3D> {
    let r = rot3(domain, u);
    let rr = rot3_vorticity(domain, &r);
    let scale = s.c_generic / domain.nu();
    let g2 = norm(domain, g, NormKind::L2)?.powi(2);
    let wa = norm(domain, w, NormKind::W1sigma(s.sigma_plus))?;
    Ok(Sample3D {
        t,
        k,
        x2: norm(domain, &r, NormKind::L2)?.powi(2),
        y2: norm(domain, &rr, NormKind::L2)?.powi(2),
        u_l2: norm(domain, u, NormKind::L2)?.powi(2),
        u_h1: norm(domain, u, NormKind::H1)?.powi(2),
        g2: scale * g2,
        a2: scale * wa * wa,
    })
}

#[derive(Debug, Clone)]
pub struct StabilityRun {
    pub perturbation: State3D,
    pub base: State2D,
    pub log: StabilityLog,
    pub base_log: TrajectoryLog,
}

/// Coupled run over `k_max` intervals; both trajectories are logged on the
/// same sample times. `observer` sees every stage of the perturbation.
#[allow(clippy::too_many_arguments)]
pub fn run_stability(
    domain: &Domain,
    u0: &State3D,
    base: &State2D,
    h: &Forcing2D,
    g: &Forcing3D,
    settings: &StabilitySettings,
    observer: &mut dyn FnMut(&Velocity3D, f64),
) -> Result<StabilityRun> {
    check_sync(u0, base)?;
    let period = domain.period();
    let (n, dt) = interval_steps(period, settings.dt)?;
    let stride = settings.stride.max(1);
    let stepper = Stepper3D::new(domain, h, g, dt)?;
    let mut y = Coupled {
        w: base.w.clone(),
        u: u0.u.clone(),
    };
    let mut log = StabilityLog {
        samples: Vec::new(),
        c_generic: settings.c_generic,
    };
    let mut base_log = TrajectoryLog::default();
    let mut record = |t: f64, k: usize, y: &Coupled| -> Result<()> {
        log.samples.push(sample_3d(domain, t, k, &y.u, &y.w, &g.at(t), settings)?);
        base_log.samples.push(sample_2d(domain, t, k, &y.w, &h.at(t), settings.sigma)?);
        Ok(())
    };
    let k0 = u0.k;
    for k in k0..k0 + settings.k_max {
        let t0 = k as f64 * period;
        for j in 0..n {
            let t = t0 + j as f64 * dt;
            if j % stride == 0 {
                record(t, k, &y)?;
            }
            y = stepper.advance(&y, t, observer)?;
        }
    }
    let kend = k0 + settings.k_max;
    let tend = kend as f64 * period;
    record(tend, kend, &y)?;
    Ok(StabilityRun {
        perturbation: State3D { t: tend, k: kend, u: y.u },
        base: State2D::new(domain, y.w, tend, kend),
        log,
        base_log,
    })
}
