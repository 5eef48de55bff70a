//! Third-order Runge–Kutta (Kutta's scheme) in integrating-factor form.
//!
//! The linear part `-nu |kappa|^2` is integrated exactly: with
//! `E(tau) = exp(-nu |kappa|^2 tau)` per mode,
//!
//! ```text
//! U2 = E(h/2) (y + h/2 k1)
//! U3 = E(h) (y - h k1) + 2h E(h/2) k2
//! y+ = E(h) (y + h/6 k1) + 2h/3 E(h/2) k2 + h/6 k3
//! ```
//!
//! Only decaying exponentials appear, so the scheme is unconditionally
//! stable for the diffusive part.

use ndarray::{Array, Dimension, Zip};

use crate::domain::Domain;
use crate::error::Result;

/// Per-mode factors `E(h/2)` and `E(h)` for one array shape.
#[derive(Debug, Clone)]
pub struct DecayTable<D: Dimension> {
    pub half: Array<f64, D>,
    pub full: Array<f64, D>,
}

impl<D: Dimension> DecayTable<D> {
    pub fn new(domain: &Domain, shape: D, nu: f64, h: f64) -> Self {
        let lambda = domain.lambda_table(shape);
        DecayTable {
            half: lambda.mapv(|l| (-nu * l * 0.5 * h).exp()),
            full: lambda.mapv(|l| (-nu * l * h).exp()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Half,
    Full,
}

/// State vector the integrator can combine linearly.
pub trait Stage: Clone {
    type Tables;
    fn axpy(&mut self, alpha: f64, other: &Self);
    fn apply(&mut self, tables: &Self::Tables, which: Factor);
}

pub(crate) fn apply_factor<D: Dimension>(a: &mut Array<f64, D>, t: &DecayTable<D>, which: Factor) {
    let f = match which {
        Factor::Half => &t.half,
        Factor::Full => &t.full,
    };
    Zip::from(a).and(f).for_each(|x, &e| *x *= e);
}

/// One step from `(y, t)` to `t + h`. `rhs` evaluates the explicit
/// (nonlinear plus forcing) part; `observer` sees every stage state.
pub fn if_rk3<S: Stage>(
    y: &S,
    t: f64,
    h: f64,
    tables: &S::Tables,
    rhs: &mut dyn FnMut(&S, f64, usize) -> Result<S>,
    observer: &mut dyn FnMut(&S, f64),
) -> Result<S> {
    let k1 = rhs(y, t, 1)?;

    let mut u2 = y.clone();
    u2.axpy(0.5 * h, &k1);
    u2.apply(tables, Factor::Half);
    observer(&u2, t + 0.5 * h);
    let k2 = rhs(&u2, t + 0.5 * h, 2)?;

    let mut u3 = y.clone();
    u3.axpy(-h, &k1);
    u3.apply(tables, Factor::Full);
    let mut k2h = k2.clone();
    k2h.apply(tables, Factor::Half);
    u3.axpy(2.0 * h, &k2h);
    observer(&u3, t + h);
    let k3 = rhs(&u3, t + h, 3)?;

    let mut next = y.clone();
    next.axpy(h / 6.0, &k1);
    next.apply(tables, Factor::Full);
    next.axpy(2.0 * h / 3.0, &k2h);
    next.axpy(h / 6.0, &k3);
    observer(&next, t + h);
    Ok(next)
}
