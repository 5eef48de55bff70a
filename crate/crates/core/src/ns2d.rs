//! 2D base flow in vorticity–streamfunction form,
//! `omega_t + w . grad omega = nu Delta omega + rot h`,
//! stepped over the intervals `[kT, (k+1)T]`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Ix2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Grid};
use crate::elliptic::solve_divcurl_2d;
use crate::error::{Error, Result};
use crate::fields::{advect_on_grid, norm, rot2_scalar, GridVector, NormKind, Velocity2D, Vorticity2D};
use crate::forcing::Forcing2D;
use crate::integrator::{apply_factor, if_rk3, DecayTable, Factor, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeValue {
    pub mode: Vec<usize>,
    pub value: f64,
}

fn one() -> f64 {
    1.0
}

/// Initial streamfunction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Initial2D {
    /// `w = A (sin x1 cos x2, -cos x1 sin x2)` in units of the lowest mode.
    TaylorGreen {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Random dealiased streamfunction rescaled to `||w||^2 = energy`.
    Random {
        seed: u64,
        energy: f64,
        #[serde(default)]
        band: Option<usize>,
    },
    Zero,
    /// Explicit streamfunction coefficients.
    Modes { modes: Vec<ModeValue> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct State2D {
    pub t: f64,
    pub k: usize,
    pub w: Velocity2D,
    pub omega: Vorticity2D,
}

impl State2D {
    pub fn new(domain: &Domain, w: Velocity2D, t: f64, k: usize) -> Self {
        let omega = rot2_scalar(domain, &w);
        State2D { t, k, w, omega }
    }
}

pub(crate) fn check_stream_modes(domain: &Domain, psi: &ndarray::Array2<f64>) -> Result<()> {
    let cut = domain.cutoffs(2);
    for ((i, j), v) in psi.indexed_iter() {
        if *v != 0.0 {
            for (m, c) in [(i, cut[0]), (j, cut[1])] {
                if m > c {
                    return Err(Error::ModeOutOfRange { mode: m, cutoff: c });
                }
            }
        }
    }
    Ok(())
}

/// Builds the initial streamfunction; modes must lie in the dealiased band.
pub fn initial_velocity_2d(domain: &Domain, init: &Initial2D) -> Result<Velocity2D> {
    let mut w = Velocity2D::zeros(domain);
    match init {
        Initial2D::Zero => {}
        Initial2D::TaylorGreen { amplitude } => {
            // w1 = -psi_{,2} carries the amplitude; w2 follows from div w = 0
            w.psi[[1, 1]] = -amplitude / domain.kappa(1, 1);
        }
        Initial2D::Random { seed, energy, band } => {
            if !(energy.is_finite() && *energy >= 0.0) {
                return Err(Error::InvalidArgument(format!("energy must be >= 0, got {energy}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let b = band.unwrap_or(usize::MAX);
            let r = Velocity2D::random(domain, &mut rng, b);
            let e = norm(domain, &r, NormKind::L2)?.powi(2);
            if e > 0.0 {
                w = r.scaled((energy / e).sqrt());
            }
        }
        Initial2D::Modes { modes } => {
            let shape = domain.modal_shape(2);
            for mv in modes {
                if mv.mode.len() != 2 {
                    return Err(Error::InvalidArgument(format!("2D mode needs two indices: {:?}", mv.mode)));
                }
                let (i, j) = (mv.mode[0], mv.mode[1]);
                if i == 0 || j == 0 || i >= shape[0] || j >= shape[1] {
                    return Err(Error::ModeOutOfRange {
                        mode: i.max(j),
                        cutoff: shape[0].min(shape[1]) - 1,
                    });
                }
                if !mv.value.is_finite() {
                    return Err(Error::InvalidArgument("non-finite mode value".into()));
                }
                w.psi[[i, j]] += mv.value;
            }
        }
    }
    check_stream_modes(domain, &w.psi)?;
    Ok(w)
}

pub fn init_2d(domain: &Domain, init: &Initial2D) -> Result<State2D> {
    Ok(State2D::new(domain, initial_velocity_2d(domain, init)?, 0.0, 0))
}

impl Stage for Velocity2D {
    type Tables = DecayTable<Ix2>;

    fn axpy(&mut self, alpha: f64, other: &Self) {
        self.psi.scaled_add(alpha, &other.psi);
    }

    fn apply(&mut self, tables: &Self::Tables, which: Factor) {
        apply_factor(&mut self.psi, tables, which);
    }
}

/// `dt * sum_i max|w_i| / dx_i` with native grid spacing.
pub(crate) fn cfl_number(domain: &Domain, max_abs: &[f64], dt: f64) -> f64 {
    max_abs
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let ax = domain.axis(i);
            m / (ax.length / ax.modes as f64)
        })
        .sum::<f64>()
        * dt
}

/// Explicit part of the streamfunction equation:
/// `Delta^{-1}(-P_M[w . grad omega]) + psi_h`.
pub(crate) fn rhs_2d(
    domain: &Domain,
    w: &Velocity2D,
    force: &Velocity2D,
    cfl: Option<(f64, f64)>,
) -> Result<Velocity2D> {
    let vel = w.velocity(domain);
    let grids = GridVector::from_spectral(domain, &vel, Grid::Product)?;
    if let Some((t, dt)) = cfl {
        let max = grids.max_abs();
        if max.iter().any(|m| !m.is_finite()) {
            return Err(Error::BlowUp { t });
        }
        let number = cfl_number(domain, &max, dt);
        if number > 1.0 {
            return Err(Error::Cfl { t, dt, number });
        }
    }
    let omega = rot2_scalar(domain, w).scalar();
    let adv = advect_on_grid(domain, &grids, &omega)?;
    let mut out = solve_divcurl_2d(domain, &Vorticity2D { omega: adv.coeffs });
    out.psi.mapv_inplace(|v| -v);
    out.psi += &force.psi;
    Ok(out)
}

/// Cached integrating-factor tables for a fixed step.
pub struct Stepper2D<'a> {
    domain: &'a Domain,
    forcing: &'a Forcing2D,
    dt: f64,
    tables: DecayTable<Ix2>,
}

impl<'a> Stepper2D<'a> {
    pub fn new(domain: &'a Domain, forcing: &'a Forcing2D, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let s = domain.modal_shape(2);
        Ok(Stepper2D {
            domain,
            forcing,
            dt,
            tables: DecayTable::new(domain, Ix2(s[0], s[1]), domain.nu(), dt),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub(crate) fn tables(&self) -> &DecayTable<Ix2> {
        &self.tables
    }

    pub(crate) fn rhs(&self, w: &Velocity2D, t: f64, stage: usize) -> Result<Velocity2D> {
        let cfl = (stage == 1).then_some((t, self.dt));
        rhs_2d(self.domain, w, &self.forcing.at(t), cfl)
    }

    /// Advances `w` from `t` to `t + dt`.
    pub fn advance(&self, w: &Velocity2D, t: f64) -> Result<Velocity2D> {
        let next = if_rk3(
            w,
            t,
            self.dt,
            &self.tables,
            &mut |s: &Velocity2D, ts, stage| self.rhs(s, ts, stage),
            &mut |_, _| {},
        )?;
        if next.psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t: t + self.dt });
        }
        Ok(next)
    }
}

/// One step of the integrating-factor RK3 scheme.
pub fn step_2d(domain: &Domain, state: &State2D, forcing: &Forcing2D, dt: f64) -> Result<State2D> {
    let stepper = Stepper2D::new(domain, forcing, dt)?;
    let w = stepper.advance(&state.w, state.t)?;
    Ok(State2D::new(domain, w, state.t + dt, state.k))
}

/// Largest stable step `1 / sum_i (max|w_i| / dx_i)` for the current field.
pub fn cfl_limit_2d(domain: &Domain, w: &Velocity2D) -> Result<f64> {
    let vel = w.velocity(domain);
    let grids = GridVector::from_spectral(domain, &vel, Grid::Product)?;
    let rate = cfl_number(domain, &grids.max_abs(), 1.0);
    Ok(if rate > 0.0 { 1.0 / rate } else { f64::INFINITY })
}

/// Step count per interval and the matching step, `T / ceil(T / dt)`.
pub fn interval_steps(period: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let n = ((period / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok((n, period / n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub k_max: usize,
    pub dt: f64,
    /// Steps between samples; interval endpoints are always sampled.
    pub stride: usize,
    /// Exponent of the logged `W^1_sigma` norm.
    pub sigma: f64,
}

/// One row of the trajectory log. Squared norms except where noted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample2D {
    pub t: f64,
    pub k: usize,
    /// `||w||^2`
    #[serde(rename = "E")]
    pub energy: f64,
    /// `||w||_{H1}^2`
    #[serde(rename = "H1")]
    pub h1: f64,
    /// `||rot w||^2 = ||grad w||^2`
    pub enstrophy: f64,
    /// `||grad rot w||^2 = ||D^2 w||^2`
    pub palinstrophy: f64,
    /// `||w||_{W^1_sigma}` (not squared)
    #[serde(rename = "W1sigma")]
    pub w1sigma: f64,
    /// `||h||^2` of the effective force
    #[serde(rename = "force_L2")]
    pub force_l2: f64,
    /// `||h||_{L_sigma}` (not squared)
    #[serde(rename = "force_Lsigma")]
    pub force_lsigma: f64,
}

impl Sample2D {
    /// `||w||_{H2}^2 = ||w||_{H1}^2 + ||D^2 w||^2`.
    pub fn h2(&self) -> f64 {
        self.h1 + self.palinstrophy
    }
}

pub const TRAJECTORY_COLUMNS: [&str; 9] = [
    "t", "k", "E", "H1", "enstrophy", "palinstrophy", "W1sigma", "force_L2", "force_Lsigma",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub samples: Vec<Sample2D>,
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl TrajectoryLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRAJECTORY_COLUMNS)?;
        for s in &self.samples {
            w.write_record([
                fmt_f64(s.t),
                s.k.to_string(),
                fmt_f64(s.energy),
                fmt_f64(s.h1),
                fmt_f64(s.enstrophy),
                fmt_f64(s.palinstrophy),
                fmt_f64(s.w1sigma),
                fmt_f64(s.force_l2),
                fmt_f64(s.force_lsigma),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let samples = r.deserialize().collect::<std::result::Result<Vec<Sample2D>, _>>()?;
        Ok(TrajectoryLog { samples })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// Samples of interval `k`, including the closing sample at `(k+1)T`.
    pub fn interval(&self, k: usize) -> Vec<Sample2D> {
        let mut out: Vec<Sample2D> = self.samples.iter().filter(|s| s.k == k).copied().collect();
        if let Some(end) = self.samples.iter().find(|s| s.k == k + 1) {
            out.push(*end);
        }
        out
    }

    /// Number of completed intervals.
    pub fn intervals(&self) -> usize {
        self.samples.iter().map(|s| s.k).max().unwrap_or(0)
    }
}

pub(crate) fn sample_2d(
    domain: &Domain,
    t: f64,
    k: usize,
    w: &Velocity2D,
    force: &Velocity2D,
    sigma: f64,
) -> Result<Sample2D> {
    let energy = norm(domain, w, NormKind::L2)?.powi(2);
    let h1 = norm(domain, w, NormKind::H1)?.powi(2);
    let om = rot2_scalar(domain, w).scalar();
    let enstrophy = om.weighted_energy(domain, |_| 1.0);
    let palinstrophy = om.weighted_energy(domain, |l| l);
    let w1sigma = norm(domain, w, NormKind::W1sigma(sigma))?;
    let force_l2 = norm(domain, force, NormKind::L2)?.powi(2);
    let force_lsigma = if force_l2 == 0.0 {
        0.0
    } else {
        norm(domain, force, NormKind::Lsigma(sigma))?
    };
    Ok(Sample2D {
        t,
        k,
        energy,
        h1,
        enstrophy,
        palinstrophy,
        w1sigma,
        force_l2,
        force_lsigma,
    })
}

/// Advances through `k_max` intervals, sampling every `stride` steps and at
/// every `kT`. Times are formed as `kT + j dt` to avoid drift.
pub fn run_2d(
    domain: &Domain,
    state: &State2D,
    forcing: &Forcing2D,
    settings: &RunSettings,
) -> Result<(State2D, TrajectoryLog)> {
    let period = domain.period();
    let (n, dt) = interval_steps(period, settings.dt)?;
    let stride = settings.stride.max(1);
    let stepper = Stepper2D::new(domain, forcing, dt)?;
    let k0 = state.k;
    let mut w = state.w.clone();
    let mut log = TrajectoryLog::default();
    for k in k0..k0 + settings.k_max {
        let t0 = k as f64 * period;
        for j in 0..n {
            let t = t0 + j as f64 * dt;
            if j % stride == 0 {
                log.samples.push(sample_2d(domain, t, k, &w, &forcing.at(t), settings.sigma)?);
            }
            w = stepper.advance(&w, t)?;
        }
    }
    let kend = k0 + settings.k_max;
    let tend = kend as f64 * period;
    log.samples.push(sample_2d(domain, tend, kend, &w, &forcing.at(tend), settings.sigma)?);
    Ok((State2D::new(domain, w, tend, kend), log))
}
