//! Spectral field containers and the differential operators acting on them.

use std::f64::consts::PI;
use std::str::FromStr;

use ndarray::{Array, Array2, Array3, Dimension, IntoDimension, IxDyn, Ix2, Ix3, Zip};
use rand::Rng;

use crate::domain::{vorticity_parity, velocity_parity, Domain, Grid, Parity};
use crate::error::{Error, Result};

/// A scalar series with one fixed parity per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectral<D: Dimension> {
    pub coeffs: Array<f64, D>,
    pub parity: Vec<Parity>,
}

fn dim_of<D: Dimension>(shape: &[usize]) -> D {
    D::from_dimension(&IxDyn(shape)).expect("dimension matches parity table")
}

/// Parseval weight of a mode: `int phi_m^2 dx` of the basis function.
fn mode_weight(domain: &Domain, idx: &[usize], parity: &[Parity]) -> f64 {
    idx.iter()
        .zip(parity)
        .enumerate()
        .map(|(k, (&m, &p))| {
            let l = domain.axis(k).length;
            match (m, p) {
                (0, Parity::Sine) => 0.0,
                (0, Parity::Cosine) => l,
                _ => 0.5 * l,
            }
        })
        .product()
}

/// Mean of `sin(pi m x / L)` or `cos(pi m x / L)` over `(0, L)`.
pub fn axis_mean(m: usize, parity: Parity) -> f64 {
    match parity {
        Parity::Sine if m % 2 == 1 => 2.0 / (PI * m as f64),
        Parity::Sine => 0.0,
        Parity::Cosine if m == 0 => 1.0,
        Parity::Cosine => 0.0,
    }
}

impl<D: Dimension> Spectral<D> {
    pub fn zeros(domain: &Domain, parity: Vec<Parity>) -> Self {
        let shape = domain.modal_shape(parity.len());
        Spectral {
            coeffs: Array::zeros(dim_of::<D>(&shape)),
            parity,
        }
    }

    pub fn new(coeffs: Array<f64, D>, parity: Vec<Parity>) -> Result<Self> {
        if coeffs.ndim() != parity.len() {
            return Err(Error::ParityMismatch(format!(
                "{} parity tags for a {}-d tensor",
                parity.len(),
                coeffs.ndim()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(Spectral { coeffs, parity })
    }

    pub fn ndim(&self) -> usize {
        self.parity.len()
    }

    /// Partial derivative along `axis`; flips the parity on that axis.
    pub fn derivative(&self, domain: &Domain, axis: usize) -> Self {
        let sign = self.parity[axis].derivative_sign();
        let kappa = &domain.axis(axis).kappa;
        let mut coeffs = self.coeffs.clone();
        for (idx, v) in coeffs.indexed_iter_mut() {
            let m = idx.into_dimension()[axis];
            *v *= sign * kappa[m];
        }
        let mut parity = self.parity.clone();
        parity[axis] = parity[axis].derivative();
        Spectral { coeffs, parity }
    }

    pub fn laplacian(&self, domain: &Domain) -> Self {
        let mut coeffs = self.coeffs.clone();
        for (idx, v) in coeffs.indexed_iter_mut() {
            *v *= -domain.lambda(idx.into_dimension().slice());
        }
        Spectral {
            coeffs,
            parity: self.parity.clone(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Spectral {
            coeffs: &self.coeffs * s,
            parity: self.parity.clone(),
        }
    }

    /// `alpha * self + beta * other`; parities must agree.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.parity != other.parity {
            return Err(Error::ParityMismatch(format!(
                "cannot add {:?} and {:?}",
                self.parity, other.parity
            )));
        }
        let mut coeffs = self.coeffs.clone();
        Zip::from(&mut coeffs)
            .and(&other.coeffs)
            .for_each(|a, &b| *a = alpha * *a + beta * b);
        Ok(Spectral {
            coeffs,
            parity: self.parity.clone(),
        })
    }

    pub fn to_grid(&self, domain: &Domain, grid: Grid) -> Result<Array<f64, D>> {
        domain.to_grid(&self.coeffs, &self.parity, grid)
    }

    pub fn from_grid(
        domain: &Domain,
        values: &Array<f64, D>,
        parity: Vec<Parity>,
        grid: Grid,
    ) -> Result<Self> {
        let coeffs = domain.from_grid(values, &parity, grid)?;
        Ok(Spectral { coeffs, parity })
    }

    /// `sum_m W_m f(|kappa_m|^2) c_m^2` with Parseval weights `W_m`.
    pub fn weighted_energy(&self, domain: &Domain, f: impl Fn(f64) -> f64) -> f64 {
        let mut sum = 0.0;
        for (idx, &c) in self.coeffs.indexed_iter() {
            if c == 0.0 {
                continue;
            }
            let idx = idx.into_dimension();
            let w = mode_weight(domain, idx.slice(), &self.parity);
            sum += w * f(domain.lambda(idx.slice())) * c * c;
        }
        sum
    }

    /// Exact mean over the box.
    pub fn mean(&self) -> f64 {
        let mut sum = 0.0;
        for (idx, &c) in self.coeffs.indexed_iter() {
            if c == 0.0 {
                continue;
            }
            let idx = idx.into_dimension();
            let f: f64 = idx
                .slice()
                .iter()
                .zip(&self.parity)
                .map(|(&m, &p)| axis_mean(m, p))
                .product();
            sum += f * c;
        }
        sum
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Anything that can be viewed as a list of scalar spectral components.
pub trait SpectralField<D: Dimension> {
    fn components(&self, domain: &Domain) -> Vec<Spectral<D>>;
}

impl<D: Dimension> SpectralField<D> for Spectral<D> {
    fn components(&self, _: &Domain) -> Vec<Spectral<D>> {
        vec![self.clone()]
    }
}

impl<D: Dimension> SpectralField<D> for Vec<Spectral<D>> {
    fn components(&self, _: &Domain) -> Vec<Spectral<D>> {
        self.clone()
    }
}

impl<D: Dimension, const K: usize> SpectralField<D> for [Spectral<D>; K] {
    fn components(&self, _: &Domain) -> Vec<Spectral<D>> {
        self.to_vec()
    }
}

/// 2D velocity `w = (-psi_{,2}, psi_{,1})` stored through its streamfunction.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity2D {
    /// Sine-sine streamfunction coefficients.
    pub psi: Array2<f64>,
}

/// Scalar sine-sine field: the vorticity `rot w = w_{2,1} - w_{1,2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vorticity2D {
    pub omega: Array2<f64>,
}

const SS: [Parity; 2] = [Parity::Sine, Parity::Sine];

impl Velocity2D {
    pub fn zeros(domain: &Domain) -> Self {
        let s = domain.modal_shape(2);
        Velocity2D {
            psi: Array2::zeros((s[0], s[1])),
        }
    }

    pub fn from_psi(psi: Array2<f64>) -> Self {
        Velocity2D { psi }
    }

    pub fn stream(&self) -> Spectral<Ix2> {
        Spectral {
            coeffs: self.psi.clone(),
            parity: SS.to_vec(),
        }
    }

    /// `[w1, w2]` with parities `(S,C)` and `(C,S)`.
    pub fn velocity(&self, domain: &Domain) -> [Spectral<Ix2>; 2] {
        let psi = self.stream();
        [psi.derivative(domain, 1).scaled(-1.0), psi.derivative(domain, 0)]
    }

    /// Recovers the streamfunction of a divergence-free vector with the
    /// 2D velocity parities: `psi = (kappa_1 a_2 - kappa_2 a_1) / |kappa|^2`.
    pub fn from_velocity(domain: &Domain, a: &[Spectral<Ix2>]) -> Result<Self> {
        if a.len() != 2
            || a[0].parity != velocity_parity(0, 2)
            || a[1].parity != velocity_parity(1, 2)
        {
            return Err(Error::ParityMismatch(
                "expected a 2D velocity with (S,C),(C,S) components".into(),
            ));
        }
        let mut psi = Array2::zeros(a[0].coeffs.raw_dim());
        for ((i, j), v) in psi.indexed_iter_mut() {
            if i == 0 || j == 0 {
                continue;
            }
            let (k1, k2) = (domain.kappa(0, i), domain.kappa(1, j));
            *v = (k1 * a[1].coeffs[[i, j]] - k2 * a[0].coeffs[[i, j]]) / (k1 * k1 + k2 * k2);
        }
        Ok(Velocity2D { psi })
    }

    /// Random streamfunction on modes `1..=band` per axis with amplitudes
    /// decaying like `|m|^-2`.
    pub fn random(domain: &Domain, rng: &mut impl Rng, band: usize) -> Self {
        let mut w = Velocity2D::zeros(domain);
        let cut = domain.cutoffs(2);
        for ((i, j), v) in w.psi.indexed_iter_mut() {
            if i == 0 || j == 0 || i > band.min(cut[0]) || j > band.min(cut[1]) {
                continue;
            }
            *v = rng.gen_range(-1.0..1.0) / ((i * i + j * j) as f64);
        }
        w
    }

    pub fn scaled(&self, s: f64) -> Self {
        Velocity2D {
            psi: &self.psi * s,
        }
    }
}

impl SpectralField<Ix2> for Velocity2D {
    fn components(&self, domain: &Domain) -> Vec<Spectral<Ix2>> {
        self.velocity(domain).to_vec()
    }
}

impl Vorticity2D {
    pub fn zeros(domain: &Domain) -> Self {
        let s = domain.modal_shape(2);
        Vorticity2D {
            omega: Array2::zeros((s[0], s[1])),
        }
    }

    pub fn scalar(&self) -> Spectral<Ix2> {
        Spectral {
            coeffs: self.omega.clone(),
            parity: SS.to_vec(),
        }
    }
}

impl SpectralField<Ix2> for Vorticity2D {
    fn components(&self, _: &Domain) -> Vec<Spectral<Ix2>> {
        vec![self.scalar()]
    }
}

/// `rot w = Delta psi`, i.e. `omega_m = -|kappa_m|^2 psi_m`.
pub fn rot2_scalar(domain: &Domain, w: &Velocity2D) -> Vorticity2D {
    Vorticity2D {
        omega: w.stream().laplacian(domain).coeffs,
    }
}

/// `(phi_{,2}, -phi_{,1})`, returned as the velocity with streamfunction `-phi`.
pub fn tilde_rot(phi: &Vorticity2D) -> Velocity2D {
    Velocity2D {
        psi: -&phi.omega,
    }
}

/// 3D velocity in the slip basis; component `i` is sine along axis `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity3D {
    pub u: [Array3<f64>; 3],
}

/// 3D field with the vorticity parities (cosine along its own axis).
#[derive(Debug, Clone, PartialEq)]
pub struct Vorticity3D {
    pub r: [Array3<f64>; 3],
}

fn zeros3(domain: &Domain) -> Array3<f64> {
    let s = domain.modal_shape(3);
    Array3::zeros((s[0], s[1], s[2]))
}

impl Velocity3D {
    pub fn zeros(domain: &Domain) -> Self {
        Velocity3D {
            u: [zeros3(domain), zeros3(domain), zeros3(domain)],
        }
    }

    pub fn component(&self, i: usize) -> Spectral<Ix3> {
        Spectral {
            coeffs: self.u[i].clone(),
            parity: velocity_parity(i, 3),
        }
    }

    pub fn from_components(c: [Spectral<Ix3>; 3]) -> Result<Self> {
        for (i, s) in c.iter().enumerate() {
            if s.parity != velocity_parity(i, 3) {
                return Err(Error::ParityMismatch(format!(
                    "component {} has parity {:?}, velocity needs {:?}",
                    i + 1,
                    s.parity,
                    velocity_parity(i, 3)
                )));
            }
        }
        let [a, b, c] = c;
        Ok(Velocity3D {
            u: [a.coeffs, b.coeffs, c.coeffs],
        })
    }

    /// Random coefficients on modes up to `band` (not projected).
    pub fn random(domain: &Domain, rng: &mut impl Rng, band: usize) -> Self {
        let mut v = Velocity3D::zeros(domain);
        let cut = domain.cutoffs(3);
        for (i, comp) in v.u.iter_mut().enumerate() {
            for ((m0, m1, m2), c) in comp.indexed_iter_mut() {
                let m = [m0, m1, m2];
                if m[i] == 0 || (0..3).any(|k| m[k] > band.min(cut[k])) {
                    continue;
                }
                let r2 = (m0 * m0 + m1 * m1 + m2 * m2) as f64;
                *c = rng.gen_range(-1.0..1.0) / r2;
            }
        }
        v
    }

    pub fn scaled(&self, s: f64) -> Self {
        Velocity3D {
            u: self.u.clone().map(|a| a * s),
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &Velocity3D) {
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            a.scaled_add(alpha, b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|a| a.iter().all(|v| v.is_finite()))
    }
}

impl SpectralField<Ix3> for Velocity3D {
    fn components(&self, _: &Domain) -> Vec<Spectral<Ix3>> {
        (0..3).map(|i| self.component(i)).collect()
    }
}

impl Vorticity3D {
    pub fn component(&self, i: usize) -> Spectral<Ix3> {
        Spectral {
            coeffs: self.r[i].clone(),
            parity: vorticity_parity(i),
        }
    }
}

impl SpectralField<Ix3> for Vorticity3D {
    fn components(&self, _: &Domain) -> Vec<Spectral<Ix3>> {
        (0..3).map(|i| self.component(i)).collect()
    }
}

/// Curl of a 3-component field, with parity bookkeeping.
pub fn curl(domain: &Domain, v: &[Spectral<Ix3>; 3]) -> Result<[Spectral<Ix3>; 3]> {
    let c = |i: usize, j: usize, k: usize| -> Result<Spectral<Ix3>> {
        let a = v[k].derivative(domain, j);
        let b = v[j].derivative(domain, k);
        a.combine(1.0, &b, -1.0)
            .map_err(|e| Error::ParityMismatch(format!("curl component {}: {e}", i + 1)))
    };
    Ok([c(0, 1, 2)?, c(1, 2, 0)?, c(2, 0, 1)?])
}

pub fn rot3(domain: &Domain, u: &Velocity3D) -> Vorticity3D {
    let comps = [u.component(0), u.component(1), u.component(2)];
    let [a, b, c] = curl(domain, &comps).expect("velocity parities are curl-consistent");
    Vorticity3D {
        r: [a.coeffs, b.coeffs, c.coeffs],
    }
}

/// Curl of a vorticity-type field, landing back in the velocity space.
pub fn rot3_vorticity(domain: &Domain, r: &Vorticity3D) -> Velocity3D {
    let comps = [r.component(0), r.component(1), r.component(2)];
    let [a, b, c] = curl(domain, &comps).expect("vorticity parities are curl-consistent");
    Velocity3D {
        u: [a.coeffs, b.coeffs, c.coeffs],
    }
}

/// Divergence (cosine in every direction).
pub fn divergence3(domain: &Domain, u: &Velocity3D) -> Spectral<Ix3> {
    let mut acc = u.component(0).derivative(domain, 0);
    for i in 1..3 {
        acc = acc
            .combine(1.0, &u.component(i).derivative(domain, i), 1.0)
            .expect("divergence terms share parity");
    }
    acc
}

/// Componentwise Laplacian of a 3D velocity.
pub fn laplacian3(domain: &Domain, u: &Velocity3D) -> Velocity3D {
    Velocity3D {
        u: [0, 1, 2].map(|i| u.component(i).laplacian(domain).coeffs),
    }
}

/// Grid values of a vector field together with the parity of each component.
#[derive(Debug, Clone)]
pub struct GridVector<D: Dimension> {
    pub values: Vec<Array<f64, D>>,
    pub parity: Vec<Vec<Parity>>,
}

impl<D: Dimension> GridVector<D> {
    pub fn from_spectral(domain: &Domain, a: &[Spectral<D>], grid: Grid) -> Result<Self> {
        Ok(GridVector {
            values: a
                .iter()
                .map(|c| c.to_grid(domain, grid))
                .collect::<Result<Vec<_>>>()?,
            parity: a.iter().map(|c| c.parity.clone()).collect(),
        })
    }

    /// Largest absolute grid value of each component.
    pub fn max_abs(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) }))
            .collect()
    }
}

/// `a . grad q`, formed on the alias-free product grid, projected onto the
/// parity space of `q` and truncated by the 2/3 rule.
pub fn advect<D: Dimension>(
    domain: &Domain,
    a: &[Spectral<D>],
    q: &Spectral<D>,
) -> Result<Spectral<D>> {
    if a.iter().any(|c| c.coeffs.shape() != q.coeffs.shape()) {
        return Err(Error::ShapeMismatch {
            expected: q.coeffs.shape().to_vec(),
            actual: a.first().map(|c| c.coeffs.shape().to_vec()).unwrap_or_default(),
        });
    }
    advect_on_grid(domain, &GridVector::from_spectral(domain, a, Grid::Product)?, q)
}

/// [`advect`] with the advecting field already on the product grid.
pub fn advect_on_grid<D: Dimension>(
    domain: &Domain,
    a: &GridVector<D>,
    q: &Spectral<D>,
) -> Result<Spectral<D>> {
    let ndim = q.ndim();
    if a.values.len() != ndim {
        return Err(Error::ShapeMismatch {
            expected: vec![ndim],
            actual: vec![a.values.len()],
        });
    }
    let mut acc: Option<Array<f64, D>> = None;
    for (i, (ag, ap)) in a.values.iter().zip(&a.parity).enumerate() {
        let dq = q.derivative(domain, i);
        let prod: Vec<Parity> = ap.iter().zip(&dq.parity).map(|(x, y)| x.product(*y)).collect();
        if prod != q.parity {
            return Err(Error::ParityMismatch(format!(
                "a_{} d_{} q has parity {:?}, expected {:?}",
                i + 1,
                i + 1,
                prod,
                q.parity
            )));
        }
        let dg = dq.to_grid(domain, Grid::Product)?;
        if dg.shape() != ag.shape() {
            return Err(Error::ShapeMismatch {
                expected: dg.shape().to_vec(),
                actual: ag.shape().to_vec(),
            });
        }
        match acc.as_mut() {
            None => acc = Some(ag * &dg),
            Some(s) => Zip::from(s).and(ag).and(&dg).for_each(|s, &x, &y| *s += x * y),
        }
    }
    let acc = acc.ok_or_else(|| Error::InvalidArgument("empty advecting field".into()))?;
    let mut out = Spectral::from_grid(domain, &acc, q.parity.clone(), Grid::Product)?;
    domain.dealias(&mut out.coeffs);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L2,
    Lsigma(f64),
    H1,
    H2,
    Linf,
    W1sigma(f64),
}

impl FromStr for NormKind {
    type Err = Error;

    /// Parses `L2`, `H1`, `H2`, `Linf`, `L<sigma>` or `W1_<sigma>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L2" => return Ok(NormKind::L2),
            "H1" => return Ok(NormKind::H1),
            "H2" => return Ok(NormKind::H2),
            "Linf" => return Ok(NormKind::Linf),
            _ => {}
        }
        let num = |t: &str| t.parse::<f64>().ok();
        if let Some(sig) = s.strip_prefix("W1_").and_then(num) {
            return Ok(NormKind::W1sigma(sig));
        }
        if let Some(sig) = s.strip_prefix('L').and_then(num) {
            return Ok(NormKind::Lsigma(sig));
        }
        Err(Error::InvalidArgument(format!("unknown norm kind {s:?}")))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "sigma must lie in (1, inf), got {sigma}"
        )))
    }
}

/// Pointwise Euclidean magnitude of a list of grid fields.
fn magnitude<D: Dimension>(grids: &[Array<f64, D>]) -> Array<f64, D> {
    let mut out = Array::zeros(grids[0].raw_dim());
    for g in grids {
        Zip::from(&mut out).and(g).for_each(|o, &v| *o += v * v);
    }
    out.mapv_inplace(f64::sqrt);
    out
}

fn lsigma_pow<D: Dimension>(domain: &Domain, grids: &[Array<f64, D>], sigma: f64) -> f64 {
    let m = magnitude(grids).mapv(|v| v.powf(sigma));
    domain.integrate(&m, Grid::Oversampled)
}

/// Norm of a field. `L2`, `H1`, `H2` come straight from the coefficients;
/// `L_sigma`, `L_inf` and `W^1_sigma` are quadratures on the oversampled grid.
pub fn norm<D: Dimension, F: SpectralField<D> + ?Sized>(
    domain: &Domain,
    field: &F,
    kind: NormKind,
) -> Result<f64> {
    let comps = field.components(domain);
    let parseval = |f: &dyn Fn(f64) -> f64| -> f64 {
        comps.iter().map(|c| c.weighted_energy(domain, f)).sum::<f64>().sqrt()
    };
    match kind {
        NormKind::L2 => Ok(parseval(&|_| 1.0)),
        NormKind::H1 => Ok(parseval(&|l| 1.0 + l)),
        NormKind::H2 => Ok(parseval(&|l| 1.0 + l + l * l)),
        NormKind::Linf => {
            let grids = comps
                .iter()
                .map(|c| c.to_grid(domain, Grid::Oversampled))
                .collect::<Result<Vec<_>>>()?;
            Ok(magnitude(&grids).iter().fold(0.0, |a, v| a.max(*v)))
        }
        NormKind::Lsigma(sigma) => {
            check_sigma(sigma)?;
            let grids = comps
                .iter()
                .map(|c| c.to_grid(domain, Grid::Oversampled))
                .collect::<Result<Vec<_>>>()?;
            Ok(lsigma_pow(domain, &grids, sigma).powf(1.0 / sigma))
        }
        NormKind::W1sigma(sigma) => {
            check_sigma(sigma)?;
            let ndim = comps.first().map(|c| c.ndim()).unwrap_or(0);
            let mut values = Vec::new();
            let mut grads = Vec::new();
            for c in &comps {
                values.push(c.to_grid(domain, Grid::Oversampled)?);
                for k in 0..ndim {
                    grads.push(c.derivative(domain, k).to_grid(domain, Grid::Oversampled)?);
                }
            }
            if values.is_empty() {
                return Ok(0.0);
            }
            let total = lsigma_pow(domain, &values, sigma) + lsigma_pow(domain, &grads, sigma);
            Ok(total.powf(1.0 / sigma))
        }
    }
}

/// One scalar component written as a finite sum of series with possibly
/// different parities (e.g. a sine series plus a constant).
#[derive(Debug, Clone, PartialEq)]
pub struct TrigComponent<D: Dimension> {
    pub terms: Vec<Spectral<D>>,
}

impl<D: Dimension> TrigComponent<D> {
    pub fn single(s: Spectral<D>) -> Self {
        TrigComponent { terms: vec![s] }
    }

    pub fn mean(&self) -> f64 {
        self.terms.iter().map(|t| t.mean()).sum()
    }

    /// Grid values of the sum.
    pub fn to_grid(&self, domain: &Domain, grid: Grid) -> Result<Option<Array<f64, D>>> {
        let mut acc: Option<Array<f64, D>> = None;
        for t in &self.terms {
            let g = t.to_grid(domain, grid)?;
            match acc.as_mut() {
                None => acc = Some(g),
                Some(a) => *a += &g,
            }
        }
        Ok(acc)
    }
}

/// Splits each component into its mean and the mean-free remainder.
///
/// The mean is evaluated exactly from the coefficients. Components that are
/// already mean-free come back unchanged.
pub fn mean_normalize<D: Dimension>(
    domain: &Domain,
    h: &[TrigComponent<D>],
) -> (Vec<TrigComponent<D>>, Vec<f64>) {
    let mut out = Vec::with_capacity(h.len());
    let mut means = Vec::with_capacity(h.len());
    for comp in h {
        let mean = comp.mean();
        let mut c = comp.clone();
        if mean != 0.0 {
            if let Some(first) = comp.terms.first() {
                let mut constant: Spectral<D> =
                    Spectral::zeros(domain, vec![Parity::Cosine; first.ndim()]);
                let origin = D::zeros(first.ndim());
                constant.coeffs[origin] = -mean;
                c.terms.push(constant);
            }
        }
        out.push(c);
        means.push(mean);
    }
    (out, means)
}

/// `int w . grad w . Delta w dx`, exact quadrature for dealiased `w`.
pub fn nonlin_orthogonality_2d(domain: &Domain, w: &Velocity2D) -> Result<f64> {
    let vel = w.velocity(domain);
    let wg = [
        vel[0].to_grid(domain, Grid::Product)?,
        vel[1].to_grid(domain, Grid::Product)?,
    ];
    let mut integrand = Array2::zeros(wg[0].raw_dim());
    for comp in &vel {
        let lap = comp.laplacian(domain).to_grid(domain, Grid::Product)?;
        for (j, wj) in wg.iter().enumerate() {
            let d = comp.derivative(domain, j).to_grid(domain, Grid::Product)?;
            Zip::from(&mut integrand)
                .and(wj)
                .and(&d)
                .and(&lap)
                .for_each(|s, &a, &b, &c| *s += a * b * c);
        }
    }
    Ok(domain.integrate(&integrand, Grid::Product))
}

/// Boundary residuals of the 2D Navier/slip relation, as maxima over the
/// boundary nodes of the native grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipGap {
    /// `n.D(w).tau - [rot w + 2 w_{n,tau} - 2 w_i n_{i,tau}]`.
    pub gap: f64,
    /// `n.D(w).tau` alone (vanishes when `rot w = 0` on the boundary).
    pub stress: f64,
    /// Boundary trace of `rot w`.
    pub vorticity: f64,
    /// Boundary trace of `w.n`.
    pub normal: f64,
}

pub fn navier_slip_gap(domain: &Domain, w: &Velocity2D) -> Result<SlipGap> {
    let vel = w.velocity(domain);
    let mut g = [[Array2::zeros((1, 1)), Array2::zeros((1, 1))], [Array2::zeros((1, 1)), Array2::zeros((1, 1))]];
    let mut val = Vec::new();
    for i in 0..2 {
        val.push(vel[i].to_grid(domain, Grid::Native)?);
        for j in 0..2 {
            g[i][j] = vel[i].derivative(domain, j).to_grid(domain, Grid::Native)?;
        }
    }
    let (p0, p1) = (val[0].nrows() - 1, val[0].ncols() - 1);
    // (node, outward normal)
    let mut nodes: Vec<((usize, usize), [f64; 2])> = Vec::new();
    for j in 0..=p1 {
        nodes.push(((0, j), [-1.0, 0.0]));
        nodes.push(((p0, j), [1.0, 0.0]));
    }
    for i in 0..=p0 {
        nodes.push(((i, 0), [0.0, -1.0]));
        nodes.push(((i, p1), [0.0, 1.0]));
    }
    let mut out = SlipGap {
        gap: 0.0,
        stress: 0.0,
        vorticity: 0.0,
        normal: 0.0,
    };
    for (ix, n) in nodes {
        let tau = [-n[1], n[0]];
        let d = |i: usize, j: usize| g[i][j][ix];
        let mut stress = 0.0;
        let mut wn_tau = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                stress += n[i] * (d(i, j) + d(j, i)) * tau[j];
                wn_tau += n[i] * d(i, j) * tau[j];
            }
        }
        let rot = d(1, 0) - d(0, 1);
        // Flat faces: the normal is constant along the boundary, n_{i,tau} = 0.
        let gap = stress - (rot + 2.0 * wn_tau);
        let wn = n[0] * val[0][ix] + n[1] * val[1][ix];
        out.gap = out.gap.max(gap.abs());
        out.stress = out.stress.max(stress.abs());
        out.vorticity = out.vorticity.max(rot.abs());
        out.normal = out.normal.max(wn.abs());
    }
    Ok(out)
}
