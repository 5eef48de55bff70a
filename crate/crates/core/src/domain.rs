//! Computational domain, trigonometric bases and the fast sine/cosine
//! transforms between coefficient space and collocation grids.
//!
//! Every axis carries either a sine series `sin(kappa m x)`, `m >= 1`, or a
//! cosine series `cos(kappa m x)`, `m >= 0`, with `kappa = pi / L`. The axial
//! coordinate `x3 in (-a, a)` is shifted to `s = x3 + a in (0, 2a)`, so the
//! axial length is `2a`.
//!
//! Coefficient tensors have `N_k` entries along axis `k` (mode indices
//! `0..N_k`); for a sine axis index 0 is always zero. Grid values live on the
//! uniform nodes `x_j = j L / P`, `j = 0..=P`, endpoints included, so boundary
//! traces are read directly off the grid.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array, ArrayView1, ArrayViewMut1, Axis, Dimension, IntoDimension, Zip};
use rustdct::{Dct1, DctPlanner, Dst1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible modal resolution per axis.
pub const MIN_RESOLUTION: usize = 8;

/// Lane count above which axis transforms run on the rayon pool.
const PAR_LANES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Sine,
    Cosine,
}

impl Parity {
    /// Parity of the derivative along the same axis.
    pub fn derivative(self) -> Parity {
        match self {
            Parity::Sine => Parity::Cosine,
            Parity::Cosine => Parity::Sine,
        }
    }

    /// Parity of a pointwise product (sin*sin and cos*cos are even).
    pub fn product(self, other: Parity) -> Parity {
        if self == other {
            Parity::Cosine
        } else {
            Parity::Sine
        }
    }

    /// Sign picked up by the derivative: `d sin = +kappa cos`, `d cos = -kappa sin`.
    pub fn derivative_sign(self) -> f64 {
        match self {
            Parity::Sine => 1.0,
            Parity::Cosine => -1.0,
        }
    }
}

/// Parity table of the velocity space: component `i` is sine-type along
/// axis `i` and cosine-type along the others. This makes `u.n = 0` and
/// `n x rot u = 0` hold on every face of the box.
pub fn velocity_parity(component: usize, ndim: usize) -> Vec<Parity> {
    (0..ndim)
        .map(|axis| {
            if axis == component {
                Parity::Sine
            } else {
                Parity::Cosine
            }
        })
        .collect()
}

/// Parity table of the 3D vorticity space (`rot` of a velocity field):
/// component `i` is cosine-type along axis `i`, sine-type along the others.
pub fn vorticity_parity(component: usize) -> Vec<Parity> {
    (0..3)
        .map(|axis| {
            if axis == component {
                Parity::Cosine
            } else {
                Parity::Sine
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    /// Half-length of the cylinder; the axial extent is `(-a, a)`.
    pub a: f64,
    #[serde(rename = "N1")]
    pub n1: usize,
    #[serde(rename = "N2")]
    pub n2: usize,
    #[serde(rename = "N3")]
    pub n3: usize,
    pub nu: f64,
    /// Length of the step-by-step time intervals `[kT, (k+1)T]`.
    #[serde(rename = "T")]
    pub period: f64,
}

impl DomainSpec {
    /// Unit box `(0,pi)^2 x (-pi/2, pi/2)` with `N` modes per axis.
    pub fn unit_box(n: usize, nu: f64, period: f64) -> Self {
        DomainSpec {
            l1: PI,
            l2: PI,
            a: PI / 2.0,
            n1: n,
            n2: n,
            n3: n,
            nu,
            period,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("L1", self.l1),
            ("L2", self.l2),
            ("a", self.a),
            ("nu", self.nu),
            ("T", self.period),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidDomain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        for (name, n) in [("N1", self.n1), ("N2", self.n2), ("N3", self.n3)] {
            if n % 2 != 0 {
                return Err(Error::InvalidDomain(format!(
                    "resolution must be even: {name}={n}"
                )));
            }
            if n < MIN_RESOLUTION {
                return Err(Error::InvalidDomain(format!(
                    "resolution too small: {name}={n} < {MIN_RESOLUTION}"
                )));
            }
        }
        Ok(())
    }
}

/// One coordinate direction of the box.
#[derive(Debug, Clone)]
pub struct AxisInfo {
    pub length: f64,
    /// Number of modal coefficients `N`.
    pub modes: usize,
    /// Largest mode index kept by the 2/3 rule, `floor(2N/3)`.
    pub cutoff: usize,
    /// Wavenumbers `kappa(m) = pi m / length`, `m = 0..N`.
    pub kappa: Vec<f64>,
}

impl AxisInfo {
    fn new(length: f64, modes: usize) -> Self {
        AxisInfo {
            length,
            modes,
            cutoff: 2 * modes / 3,
            kappa: (0..modes).map(|m| PI * m as f64 / length).collect(),
        }
    }

    /// Points of the grid used for quadratic products. Products of two
    /// dealiased fields reach mode `2M`, which folds back to `2P - 2M`; with
    /// `3M < 2P` nothing lands on a retained mode and triple products
    /// integrate exactly under the trapezoid rule.
    fn product_points(&self) -> usize {
        self.modes.max(3 * self.cutoff / 2 + 1)
    }
}

/// Which collocation grid to evaluate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// `P = N` intervals per axis.
    Native,
    /// Alias-free grid for dealiased quadratic and cubic products.
    Product,
    /// `P = 2N`, used for `L_sigma`, `L_inf` and `W^1_sigma` quadrature.
    Oversampled,
    /// Explicit interval counts per axis (each at least `N`).
    Points([usize; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Grid values to coefficients.
    Forward,
    /// Coefficients to grid values.
    Backward,
}

/// DCT-I / DST-I plans for one grid size.
struct Plan1d {
    points: usize,
    dct: Arc<dyn Dct1<f64>>,
    dst: Arc<dyn Dst1<f64>>,
}

impl Plan1d {
    fn new(points: usize) -> Self {
        let mut planner = DctPlanner::new();
        Plan1d {
            points,
            dct: planner.plan_dct1(points + 1),
            dst: planner.plan_dst1(points - 1),
        }
    }

    /// Evaluates a series with coefficients `coeffs` at `x_j = j L / P`.
    fn backward(&self, parity: Parity, coeffs: &[f64], values: &mut [f64]) {
        let p = self.points;
        debug_assert_eq!(values.len(), p + 1);
        match parity {
            Parity::Sine => {
                let mut buf = vec![0.0; p - 1];
                for (m, c) in coeffs.iter().enumerate().skip(1).take(p - 1) {
                    buf[m - 1] = *c;
                }
                self.dst.process_dst1(&mut buf);
                values[0] = 0.0;
                values[p] = 0.0;
                values[1..p].copy_from_slice(&buf);
            }
            Parity::Cosine => {
                values.fill(0.0);
                for (m, c) in coeffs.iter().enumerate().take(p) {
                    values[m] = *c;
                }
                values[0] *= 2.0;
                self.dct.process_dct1(values);
            }
        }
    }

    /// Discrete projection of grid values onto the first `coeffs.len()` modes.
    fn forward(&self, parity: Parity, values: &[f64], coeffs: &mut [f64]) {
        let p = self.points;
        let scale = 2.0 / p as f64;
        coeffs.fill(0.0);
        match parity {
            Parity::Sine => {
                let mut buf = values[1..p].to_vec();
                self.dst.process_dst1(&mut buf);
                for (m, c) in coeffs.iter_mut().enumerate().skip(1) {
                    if m < p {
                        *c = scale * buf[m - 1];
                    }
                }
            }
            Parity::Cosine => {
                let mut buf = values.to_vec();
                self.dct.process_dct1(&mut buf);
                for (m, c) in coeffs.iter_mut().enumerate() {
                    if m < p {
                        *c = scale * buf[m];
                    }
                }
                coeffs[0] *= 0.5;
            }
        }
    }
}

/// A validated domain with wavenumber tables and transform plans.
///
/// Immutable after construction and shareable across threads.
pub struct Domain {
    spec: DomainSpec,
    axes: [AxisInfo; 3],
    plans: HashMap<usize, Arc<Plan1d>>,
}

impl std::fmt::Debug for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Domain").field("spec", &self.spec).finish()
    }
}

impl Clone for Domain {
    fn clone(&self) -> Self {
        Domain {
            spec: self.spec.clone(),
            axes: self.axes.clone(),
            plans: self.plans.clone(),
        }
    }
}

impl Domain {
    /// Builds wavenumber tables and transform plans.
    pub fn new(spec: DomainSpec) -> Result<Self> {
        spec.validate()?;
        let axes = [
            AxisInfo::new(spec.l1, spec.n1),
            AxisInfo::new(spec.l2, spec.n2),
            AxisInfo::new(2.0 * spec.a, spec.n3),
        ];
        let mut plans = HashMap::new();
        for axis in &axes {
            for points in [axis.modes, axis.product_points(), 2 * axis.modes] {
                plans
                    .entry(points)
                    .or_insert_with(|| Arc::new(Plan1d::new(points)));
            }
        }
        Ok(Domain { spec, axes, plans })
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn nu(&self) -> f64 {
        self.spec.nu
    }

    pub fn period(&self) -> f64 {
        self.spec.period
    }

    pub fn axis(&self, k: usize) -> &AxisInfo {
        &self.axes[k]
    }

    pub fn kappa(&self, axis: usize, m: usize) -> f64 {
        self.axes[axis].kappa[m]
    }

    /// Coefficient shape of a field over the first `ndim` axes.
    pub fn modal_shape(&self, ndim: usize) -> Vec<usize> {
        self.axes[..ndim].iter().map(|a| a.modes).collect()
    }

    pub fn cutoffs(&self, ndim: usize) -> Vec<usize> {
        self.axes[..ndim].iter().map(|a| a.cutoff).collect()
    }

    /// Area of the cross-section.
    pub fn area(&self) -> f64 {
        self.spec.l1 * self.spec.l2
    }

    /// Volume of the cylinder.
    pub fn volume(&self) -> f64 {
        self.area() * 2.0 * self.spec.a
    }

    /// Squared wavenumber `|kappa|^2` of a multi-index.
    pub fn lambda(&self, mode: &[usize]) -> f64 {
        mode.iter()
            .enumerate()
            .map(|(k, &m)| self.kappa(k, m).powi(2))
            .sum()
    }

    /// Table of `|kappa|^2` over the coefficient shape of `ndim` axes.
    pub fn lambda_table<D: Dimension>(&self, dim: D) -> Array<f64, D> {
        Array::from_shape_fn(dim, |idx| {
            let idx = idx.into_dimension();
            self.lambda(idx.slice())
        })
    }

    /// Interval counts per axis of a grid.
    pub fn grid_points(&self, grid: Grid, ndim: usize) -> Vec<usize> {
        (0..ndim)
            .map(|k| {
                let axis = &self.axes[k];
                match grid {
                    Grid::Native => axis.modes,
                    Grid::Product => axis.product_points(),
                    Grid::Oversampled => 2 * axis.modes,
                    Grid::Points(p) => p[k],
                }
            })
            .collect()
    }

    /// Node coordinates along axis `k` in physical coordinates (the axial axis
    /// is reported on `(-a, a)`).
    pub fn nodes(&self, grid: Grid, k: usize) -> Vec<f64> {
        let p = self.grid_points(grid, k + 1)[k];
        let length = self.axes[k].length;
        let shift = if k == 2 { self.spec.a } else { 0.0 };
        (0..=p)
            .map(|j| j as f64 * length / p as f64 - shift)
            .collect()
    }

    /// Trapezoid weights along axis `k`; exact for `cos(s x)` with `s < 2P`.
    pub fn trapezoid_weights(&self, grid: Grid, k: usize) -> Vec<f64> {
        let p = self.grid_points(grid, k + 1)[k];
        let h = self.axes[k].length / p as f64;
        let mut w = vec![h; p + 1];
        w[0] = 0.5 * h;
        w[p] = 0.5 * h;
        w
    }

    /// Integral of grid values over the first `ndim` axes.
    pub fn integrate<D: Dimension>(&self, values: &Array<f64, D>, grid: Grid) -> f64 {
        let ndim = values.ndim();
        let weights: Vec<Vec<f64>> = (0..ndim)
            .map(|k| self.trapezoid_weights(grid, k))
            .collect();
        let mut sum = 0.0;
        for (idx, v) in values.indexed_iter() {
            let idx = idx.into_dimension();
            let w: f64 = idx
                .slice()
                .iter()
                .enumerate()
                .map(|(k, &j)| weights[k][j])
                .product();
            sum += w * v;
        }
        sum
    }

    fn plan(&self, points: usize) -> Arc<Plan1d> {
        match self.plans.get(&points) {
            Some(p) => Arc::clone(p),
            None => Arc::new(Plan1d::new(points)),
        }
    }

    fn check_parity(&self, parity: &[Parity], ndim: usize) -> Result<()> {
        if parity.len() != ndim || ndim > 3 || ndim == 0 {
            return Err(Error::ParityMismatch(format!(
                "parity table of length {} for a {ndim}-d field",
                parity.len()
            )));
        }
        Ok(())
    }

    /// Evaluates coefficients on a collocation grid (unchecked direction of
    /// [`Domain::transform`]).
    pub fn to_grid<D: Dimension>(
        &self,
        coeffs: &Array<f64, D>,
        parity: &[Parity],
        grid: Grid,
    ) -> Result<Array<f64, D>> {
        let ndim = coeffs.ndim();
        self.check_parity(parity, ndim)?;
        let expected = self.modal_shape(ndim);
        if coeffs.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                expected,
                actual: coeffs.shape().to_vec(),
            });
        }
        let points = self.grid_points(grid, ndim);
        let mut current = coeffs.clone();
        for k in 0..ndim {
            if points[k] < self.axes[k].modes {
                return Err(Error::InvalidArgument(format!(
                    "grid with {} intervals cannot resolve {} modes",
                    points[k], self.axes[k].modes
                )));
            }
            let plan = self.plan(points[k]);
            let par = parity[k];
            current = map_lanes(&current, k, points[k] + 1, &|src, dst| {
                plan.backward(par, src, dst)
            });
        }
        Ok(current)
    }

    /// Projects grid values onto the modal coefficients (unchecked).
    pub fn from_grid<D: Dimension>(
        &self,
        values: &Array<f64, D>,
        parity: &[Parity],
        grid: Grid,
    ) -> Result<Array<f64, D>> {
        let ndim = values.ndim();
        self.check_parity(parity, ndim)?;
        let points = self.grid_points(grid, ndim);
        let expected: Vec<usize> = points.iter().map(|p| p + 1).collect();
        if values.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                expected,
                actual: values.shape().to_vec(),
            });
        }
        let mut current = values.clone();
        for k in 0..ndim {
            let plan = self.plan(points[k]);
            let par = parity[k];
            current = map_lanes(&current, k, self.axes[k].modes, &|src, dst| {
                plan.forward(par, src, dst)
            });
        }
        Ok(current)
    }

    /// Checked transform between native-grid values and coefficients.
    ///
    /// The forward direction re-synthesizes its result and rejects data whose
    /// residual exceeds `1e-10` of the input norm: such data either does not
    /// have the requested parity or is not band-limited.
    pub fn transform<D: Dimension>(
        &self,
        data: &Array<f64, D>,
        parity: &[Parity],
        direction: Direction,
    ) -> Result<Array<f64, D>> {
        match direction {
            Direction::Backward => self.to_grid(data, parity, Grid::Native),
            Direction::Forward => {
                let coeffs = self.from_grid(data, parity, Grid::Native)?;
                let back = self.to_grid(&coeffs, parity, Grid::Native)?;
                let norm = data.iter().map(|v| v * v).sum::<f64>().sqrt();
                let leak = data
                    .iter()
                    .zip(back.iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if leak > 1e-10 * norm.max(f64::MIN_POSITIVE) {
                    return Err(Error::ParityMismatch(format!(
                        "requested parity {parity:?} leaves a residual of {:.3e} (relative)",
                        leak / norm
                    )));
                }
                Ok(coeffs)
            }
        }
    }

    /// Zeros every mode whose index on some axis exceeds `floor(2N/3)`.
    pub fn dealias<D: Dimension>(&self, coeffs: &mut Array<f64, D>) {
        let cutoffs = self.cutoffs(coeffs.ndim());
        for (idx, v) in coeffs.indexed_iter_mut() {
            let idx = idx.into_dimension();
            if idx.slice().iter().zip(&cutoffs).any(|(m, c)| m > c) {
                *v = 0.0;
            }
        }
    }

    /// Projection of a callable onto the modal basis, via the forward
    /// transform on a grid refined `refine` times.
    pub fn project_fn<D: Dimension>(
        &self,
        dim: D,
        parity: &[Parity],
        refine: usize,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Array<f64, D>> {
        let ndim = dim.ndim();
        let mut pts = [0usize; 3];
        for k in 0..ndim {
            pts[k] = refine.max(1) * self.axes[k].modes;
        }
        let grid = Grid::Points(pts);
        let nodes: Vec<Vec<f64>> = (0..ndim).map(|k| self.nodes(grid, k)).collect();
        let shape: Vec<usize> = (0..ndim).map(|k| pts[k] + 1).collect();
        let mut x = vec![0.0; ndim];
        let values = Array::from_shape_fn(D::from_dimension(&ndarray::IxDyn(&shape)).unwrap(), |idx| {
            let idx = idx.into_dimension();
            for (k, &j) in idx.slice().iter().enumerate() {
                x[k] = nodes[k][j];
            }
            f(&x)
        });
        self.from_grid(&values, parity, grid)
    }
}

/// Applies `op` to every lane along `axis`, producing lanes of `out_len`.
fn map_lanes<D: Dimension>(
    input: &Array<f64, D>,
    axis: usize,
    out_len: usize,
    op: &(dyn Fn(&[f64], &mut [f64]) + Sync),
) -> Array<f64, D> {
    let mut shape = input.raw_dim();
    shape[axis] = out_len;
    let mut out = Array::zeros(shape);
    let lanes = input.len() / input.len_of(Axis(axis)).max(1);
    let body = |src: ArrayView1<f64>, mut dst: ArrayViewMut1<f64>| {
        let src_buf: Vec<f64> = src.iter().copied().collect();
        let mut dst_buf = vec![0.0; out_len];
        op(&src_buf, &mut dst_buf);
        for (d, v) in dst.iter_mut().zip(dst_buf) {
            *d = v;
        }
    };
    let zip = Zip::from(input.lanes(Axis(axis))).and(out.lanes_mut(Axis(axis)));
    if lanes >= PAR_LANES {
        zip.par_for_each(body);
    } else {
        zip.for_each(body);
    }
    out
}
