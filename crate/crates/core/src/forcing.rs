//! Finite-mode, time-profiled external forces.
//!
//! A force is a list of entries `amplitude * p(t) * phi`, where `phi` is the
//! slip-basis function of one velocity component at one mode. Only the
//! divergence-free part of the mean-free force enters the dynamics; since
//! constants and gradients are removed by the projection, the mean recorded
//! by [`mean_normalize`](crate::fields::mean_normalize) is bookkeeping.

use ndarray::{Ix2, Ix3};
use serde::{Deserialize, Serialize};

use crate::domain::{velocity_parity, Domain};
use crate::error::{Error, Result};
use crate::fields::{mean_normalize, norm, NormKind, Spectral, TrigComponent, Velocity2D, Velocity3D};
use crate::ns3d::leray_project;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Profile {
    #[default]
    Constant,
    /// `sin(frequency * t + phase)`.
    Sinusoidal { frequency: f64, phase: f64 },
}

impl Profile {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Profile::Constant => 1.0,
            Profile::Sinusoidal { frequency, phase } => (frequency * t + phase).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingEntry {
    /// Velocity component, 1-based.
    pub component: usize,
    pub mode: Vec<usize>,
    pub amplitude: f64,
    #[serde(default)]
    pub profile: Profile,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSpec {
    #[serde(default)]
    pub entries: Vec<ForcingEntry>,
    /// Subtract the mean and keep the divergence-free part. When false the
    /// entries must already describe a divergence-free field.
    #[serde(default = "default_true")]
    pub normalize: bool,
}

impl Default for ForcingSpec {
    fn default() -> Self {
        ForcingSpec {
            entries: Vec::new(),
            normalize: true,
        }
    }
}

impl ForcingSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn single(component: usize, mode: Vec<usize>, amplitude: f64) -> Self {
        ForcingSpec {
            entries: vec![ForcingEntry {
                component,
                mode,
                amplitude,
                profile: Profile::Constant,
            }],
            normalize: true,
        }
    }

    fn validate(&self, domain: &Domain, ndim: usize) -> Result<()> {
        let cut = domain.cutoffs(ndim);
        for e in &self.entries {
            if e.component == 0 || e.component > ndim {
                return Err(Error::InvalidArgument(format!(
                    "forcing component {} outside 1..={ndim}",
                    e.component
                )));
            }
            if e.mode.len() != ndim {
                return Err(Error::InvalidArgument(format!(
                    "forcing mode {:?} needs {ndim} indices",
                    e.mode
                )));
            }
            for (k, (&m, &c)) in e.mode.iter().zip(&cut).enumerate() {
                if m > c {
                    return Err(Error::ModeOutOfRange { mode: m, cutoff: c });
                }
                if k == e.component - 1 && m == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "component {} is sine-type along its own axis; mode index 0 is void",
                        e.component
                    )));
                }
            }
            if !e.amplitude.is_finite() {
                return Err(Error::InvalidArgument("non-finite forcing amplitude".into()));
            }
            if let Profile::Sinusoidal { frequency, phase } = e.profile {
                if !(frequency.is_finite() && phase.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite forcing profile".into()));
                }
            }
        }
        Ok(())
    }

    /// Groups entries by profile; each group becomes one raw component list.
    fn groups<D: ndarray::Dimension>(
        &self,
        domain: &Domain,
        ndim: usize,
    ) -> Vec<(Profile, Vec<Spectral<D>>)> {
        let mut groups: Vec<(Profile, Vec<Spectral<D>>)> = Vec::new();
        for e in &self.entries {
            let pos = match groups.iter().position(|(p, _)| *p == e.profile) {
                Some(p) => p,
                None => {
                    let comps = (0..ndim)
                        .map(|i| Spectral::zeros(domain, velocity_parity(i, ndim)))
                        .collect();
                    groups.push((e.profile, comps));
                    groups.len() - 1
                }
            };
            let c = &mut groups[pos].1[e.component - 1];
            let idx = D::from_dimension(&ndarray::IxDyn(&e.mode)).expect("mode length checked");
            c.coeffs[idx] += e.amplitude;
        }
        groups
    }
}

/// A force reduced to its effective, divergence-free part.
#[derive(Debug, Clone)]
pub struct Resolved<F> {
    pub terms: Vec<(Profile, F)>,
    /// Per-group means of the raw entries (subtracted by normalization).
    pub means: Vec<(Profile, Vec<f64>)>,
    zero: F,
}

pub type Forcing2D = Resolved<Velocity2D>;
pub type Forcing3D = Resolved<Velocity3D>;

fn means_of<D: ndarray::Dimension>(domain: &Domain, comps: &[Spectral<D>]) -> Vec<f64> {
    let trig: Vec<TrigComponent<D>> = comps.iter().cloned().map(TrigComponent::single).collect();
    mean_normalize(domain, &trig).1
}

fn relative_change(before: f64, after: f64) -> f64 {
    if before == 0.0 {
        0.0
    } else {
        (before - after).abs() / before
    }
}

impl Forcing2D {
    pub fn resolve(domain: &Domain, spec: &ForcingSpec) -> Result<Self> {
        spec.validate(domain, 2)?;
        let mut terms = Vec::new();
        let mut means = Vec::new();
        for (profile, comps) in spec.groups::<Ix2>(domain, 2) {
            means.push((profile, means_of(domain, &comps)));
            let w = Velocity2D::from_velocity(domain, &comps)?;
            if !spec.normalize {
                let raw = norm(domain, &comps, NormKind::L2)?;
                let kept = norm(domain, &w, NormKind::L2)?;
                if relative_change(raw, kept) > 1e-12 {
                    return Err(Error::InvalidArgument(
                        "unnormalized force is not divergence-free".into(),
                    ));
                }
            }
            terms.push((profile, w));
        }
        Ok(Resolved {
            terms,
            means,
            zero: Velocity2D::zeros(domain),
        })
    }

    /// Constant-in-time force given directly as a divergence-free field.
    pub fn from_field(domain: &Domain, w: Velocity2D) -> Self {
        let means = vec![0.0; 2];
        Resolved {
            terms: vec![(Profile::Constant, w)],
            means: vec![(Profile::Constant, means)],
            zero: Velocity2D::zeros(domain),
        }
    }

    pub fn at(&self, t: f64) -> Velocity2D {
        let mut out = self.zero.clone();
        for (p, w) in &self.terms {
            out.psi.scaled_add(p.at(t), &w.psi);
        }
        out
    }
}

impl Forcing3D {
    pub fn resolve(domain: &Domain, spec: &ForcingSpec) -> Result<Self> {
        spec.validate(domain, 3)?;
        let mut terms = Vec::new();
        let mut means = Vec::new();
        for (profile, comps) in spec.groups::<Ix3>(domain, 3) {
            means.push((profile, means_of(domain, &comps)));
            let [a, b, c]: [Spectral<Ix3>; 3] = comps.try_into().expect("three components");
            let raw = Velocity3D::from_components([a, b, c])?;
            let u = leray_project(domain, &raw);
            if !spec.normalize {
                let before = norm(domain, &raw, NormKind::L2)?;
                let after = norm(domain, &u, NormKind::L2)?;
                if relative_change(before, after) > 1e-12 {
                    return Err(Error::InvalidArgument(
                        "unnormalized force is not divergence-free".into(),
                    ));
                }
            }
            terms.push((profile, u));
        }
        Ok(Resolved {
            terms,
            means,
            zero: Velocity3D::zeros(domain),
        })
    }

    pub fn at(&self, t: f64) -> Velocity3D {
        let mut out = self.zero.clone();
        for (p, u) in &self.terms {
            out.axpy(p.at(t), u);
        }
        out
    }
}

impl<F> Resolved<F> {
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Raw mean of the force at time `t`, per component.
    pub fn mean_at(&self, t: f64) -> Vec<f64> {
        let n = self.means.first().map(|m| m.1.len()).unwrap_or(0);
        let mut out = vec![0.0; n];
        for (p, m) in &self.means {
            for (o, v) in out.iter_mut().zip(m) {
                *o += p.at(t) * v;
            }
        }
        out
    }
}
