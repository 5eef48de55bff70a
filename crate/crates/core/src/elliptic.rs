//! The 2D div-curl solver and the named constants of the estimate chains.
//!
//! Closed forms come from the trigonometric eigenbasis; the embedding
//! constants that have no closed form are estimated as randomized lower
//! bounds (max of Rayleigh ratios over band-limited samples).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, DomainSpec};
use crate::error::{Error, Result};
use crate::fields::{norm, rot2_scalar, rot3, NormKind, Spectral, Velocity2D, Velocity3D, Vorticity2D};
use crate::ns3d::leray_project;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstantName {
    #[serde(rename = "c_p")]
    Poincare,
    #[serde(rename = "c_1")]
    Coercivity,
    #[serde(rename = "c_e")]
    DivCurl,
    /// `||u_x||_{L3} <= c ||u_x||_{H1}^{1/2} ||u_x||_{L2}^{1/2}` on the cylinder.
    #[serde(rename = "c_I")]
    Interpolation,
    /// `||u||_{L6} <= c ||u||_{H1}` on the cylinder.
    #[serde(rename = "c_L6")]
    L6,
    /// `||w||_{Linf} <= c ||w||_{W^1_{sigma+}}` on the cross-section.
    #[serde(rename = "c_Linf")]
    Linf,
}

impl std::str::FromStr for ConstantName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "c_p" => ConstantName::Poincare,
            "c_1" => ConstantName::Coercivity,
            "c_e" => ConstantName::DivCurl,
            "c_I" => ConstantName::Interpolation,
            "c_L6" => ConstantName::L6,
            "c_Linf" => ConstantName::Linf,
            _ => return Err(Error::InvalidArgument(format!("unknown constant {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedFormEigenvalue,
    RayleighSweep,
    RandomLowerBound,
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub name: ConstantName,
    pub value: f64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ConstantEstimate {
    fn closed(name: ConstantName, value: f64) -> Self {
        ConstantEstimate {
            name,
            value,
            method: Method::ClosedFormEigenvalue,
            samples: None,
            seed: None,
        }
    }
}

/// Solves `rot w = b`, `div w = 0`, `w.n = 0`: `psi = Delta^{-1} b` with
/// Dirichlet data.
pub fn solve_divcurl_2d(domain: &Domain, b: &Vorticity2D) -> Velocity2D {
    let mut psi = b.omega.clone();
    for ((i, j), v) in psi.indexed_iter_mut() {
        if i == 0 || j == 0 {
            *v = 0.0;
        } else {
            *v /= -domain.lambda(&[i, j]);
        }
    }
    Velocity2D { psi }
}

/// Smallest Dirichlet eigenvalue of the cross-section.
pub fn lambda1(domain: &Domain) -> f64 {
    domain.lambda(&[1, 1])
}

pub fn poincare_constant(domain: &Domain) -> ConstantEstimate {
    ConstantEstimate::closed(ConstantName::Poincare, lambda1(domain).sqrt())
}

/// `min ||rot w||^2 / ||w||_{H1}^2 = lambda_1 / (1 + lambda_1)`.
pub fn coercivity_c1(domain: &Domain) -> ConstantEstimate {
    let l = lambda1(domain);
    ConstantEstimate::closed(ConstantName::Coercivity, l / (1.0 + l))
}

/// Smallest `|kappa|^2` carrying a nonzero divergence-free 3D mode. A mode
/// with a single nonzero index has only one admissible component, which the
/// divergence constraint kills, so at least two indices must be nonzero.
pub fn lambda1_3d(domain: &Domain) -> f64 {
    let mut k: Vec<f64> = (0..3).map(|a| domain.kappa(a, 1).powi(2)).collect();
    k.sort_by(|a, b| a.total_cmp(b));
    k[0] + k[1]
}

pub fn divcurl_constant_3d(domain: &Domain) -> ConstantEstimate {
    let l = lambda1_3d(domain);
    ConstantEstimate::closed(ConstantName::DivCurl, ((1.0 + l) / l).sqrt())
}

/// Converts the vorticity-level bound into the velocity-level one:
/// `||w||_{H1}^2 <= ||rot w||^2 / c_1` and
/// `c_p ||w||_{H2}^2 <= c_p (1 + 1/lambda_1 + 1/lambda_1^2) ||grad rot w||^2`,
/// so `c_2` is the larger of the two factors.
pub fn c2_constant(domain: &Domain) -> f64 {
    let l = lambda1(domain);
    let c1 = l / (1.0 + l);
    (1.0 / c1).max(l.sqrt() * (1.0 + 1.0 / l + 1.0 / (l * l)))
}

/// Exhaustive sweep of `lambda/(1+lambda)` over the retained stream modes;
/// returns the minimizing mode and the minimum.
pub fn c1_mode_sweep(domain: &Domain) -> ((usize, usize), f64) {
    let s = domain.modal_shape(2);
    let mut best = ((0, 0), f64::INFINITY);
    for i in 1..s[0] {
        for j in 1..s[1] {
            let l = domain.lambda(&[i, j]);
            let r = l / (1.0 + l);
            if r < best.1 {
                best = ((i, j), r);
            }
        }
    }
    best
}

/// Enumerates every 3D mode and returns the least `|kappa|^2` over modes
/// whose divergence-free subspace is nontrivial.
pub fn lambda1_3d_enumerated(domain: &Domain) -> f64 {
    let s = domain.modal_shape(3);
    let mut best = f64::INFINITY;
    for i in 0..s[0] {
        for j in 0..s[1] {
            for k in 0..s[2] {
                let nonzero = [i, j, k].iter().filter(|m| **m > 0).count();
                // admissible components minus one divergence constraint
                if nonzero >= 2 {
                    best = best.min(domain.lambda(&[i, j, k]));
                }
            }
        }
    }
    best
}

fn random_scalar_ss(domain: &Domain, rng: &mut ChaCha8Rng) -> Spectral<ndarray::Ix2> {
    let w = Velocity2D::random(domain, rng, domain.axis(0).cutoff.max(domain.axis(1).cutoff));
    Spectral {
        coeffs: w.psi,
        parity: vec![crate::domain::Parity::Sine; 2],
    }
}

/// Minimum of `||grad u|| / ||u||` over random sine-sine fields.
pub fn poincare_sweep(domain: &Domain, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let u = random_scalar_ss(domain, &mut rng);
            let l2 = u.weighted_energy(domain, |_| 1.0);
            let g = u.weighted_energy(domain, |l| l);
            (g / l2).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Minimum of `||rot w||^2 / ||w||_{H1}^2` over random stream fields.
pub fn c1_sweep(domain: &Domain, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let w = Velocity2D::random(domain, &mut rng, usize::MAX);
            let r = norm(domain, &rot2_scalar(domain, &w), NormKind::L2).unwrap();
            let h = norm(domain, &w, NormKind::H1).unwrap();
            (r * r) / (h * h)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Maximum of `||u||_{H1} / ||rot u||` over random projected 3D fields.
pub fn divcurl_sweep(domain: &Domain, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let band = rng.gen_range(1..=domain.axis(0).cutoff);
            let u = leray_project(domain, &Velocity3D::random(domain, &mut rng, band));
            let h = norm(domain, &u, NormKind::H1).unwrap();
            let r = norm(domain, &rot3(domain, &u), NormKind::L2).unwrap();
            if r == 0.0 {
                0.0
            } else {
                h / r
            }
        })
        .fold(0.0, f64::max)
}

/// Resolution used for the randomized embedding estimates.
const EMBEDDING_MODES: usize = 8;

/// Randomized lower bound for an embedding constant: the largest Rayleigh
/// ratio seen over `samples` random band-limited fields on a reduced-resolution
/// copy of the domain. `sigma_plus` is the exponent of `W^1_{sigma+}` used by
/// the `L_inf` estimate.
pub fn estimate_embedding(
    kind: ConstantName,
    domain: &Domain,
    samples: usize,
    seed: u64,
    sigma_plus: f64,
) -> Result<ConstantEstimate> {
    if samples < 100 {
        return Err(Error::InvalidArgument(format!(
            "embedding estimate needs at least 100 samples, got {samples}"
        )));
    }
    let spec = DomainSpec {
        n1: EMBEDDING_MODES,
        n2: EMBEDDING_MODES,
        n3: EMBEDDING_MODES,
        ..domain.spec().clone()
    };
    let small = Domain::new(spec)?;
    let band = small.axis(0).cutoff;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    // sample 0 is the lowest admissible mode
    for s in 0..samples {
        let b = rng.gen_range(1..=band);
        let sample3 = |rng: &mut ChaCha8Rng| {
            if s == 0 {
                lowest_mode_3d(&small)
            } else {
                leray_project(&small, &Velocity3D::random(&small, rng, b))
            }
        };
        let ratio = match kind {
            ConstantName::Interpolation => {
                let u = sample3(&mut rng);
                interpolation_ratio(&small, &u)?
            }
            ConstantName::L6 => {
                let u = sample3(&mut rng);
                let h1 = norm(&small, &u, NormKind::H1)?;
                if h1 == 0.0 {
                    continue;
                }
                norm(&small, &u, NormKind::Lsigma(6.0))? / h1
            }
            ConstantName::Linf => {
                let w = if s == 0 {
                    let mut w = Velocity2D::zeros(&small);
                    w.psi[[1, 1]] = 1.0;
                    w
                } else {
                    Velocity2D::random(&small, &mut rng, b)
                };
                let d = norm(&small, &w, NormKind::W1sigma(sigma_plus))?;
                if d == 0.0 {
                    continue;
                }
                norm(&small, &w, NormKind::Linf)? / d
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "{other:?} is not an embedding constant"
                )))
            }
        };
        best = best.max(ratio);
    }
    Ok(ConstantEstimate {
        name: kind,
        value: best,
        method: Method::RandomLowerBound,
        samples: Some(samples),
        seed: Some(seed),
    })
}

/// Divergence-free `(sin x1 cos x2 cos x3, -cos x1 sin x2 cos x3, 0)` type mode.
pub fn lowest_mode_3d(domain: &Domain) -> Velocity3D {
    let mut u = Velocity3D::zeros(domain);
    let (k1, k2) = (domain.kappa(0, 1), domain.kappa(1, 1));
    u.u[0][[1, 1, 1]] = k2;
    u.u[1][[1, 1, 1]] = -k1;
    u
}

/// `||u_x||_{L3} / (||u_x||_{H1}^{1/2} ||u_x||_{L2}^{1/2})` for the full
/// gradient of `u`.
pub fn interpolation_ratio(domain: &Domain, u: &Velocity3D) -> Result<f64> {
    let mut grad = Vec::with_capacity(9);
    for i in 0..3 {
        let c = u.component(i);
        for k in 0..3 {
            grad.push(c.derivative(domain, k));
        }
    }
    let l3 = norm(domain, &grad, NormKind::Lsigma(3.0))?;
    let h1 = norm(domain, &grad, NormKind::H1)?;
    let l2 = norm(domain, &grad, NormKind::L2)?;
    if h1 == 0.0 || l2 == 0.0 {
        return Ok(0.0);
    }
    Ok(l3 / (h1 * l2).sqrt())
}
