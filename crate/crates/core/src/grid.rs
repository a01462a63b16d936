//! Uniform tensor grids, sampled scalar fields and the discrete diffusion
//! operator.
//!
//! Grid layouts per boundary mode (per axis, `m` points, extent `L`):
//!
//! * periodic: nodes at `i·h`, `h = L/m`, indices wrap;
//! * Neumann: cell-centred nodes at `(i+½)·h`, `h = L/m`, ghost values mirror
//!   the adjacent node so the boundary flux vanishes;
//! * Dirichlet: interior nodes at `(i+1)·h`, `h = L/(m+1)`, ghost values are 0.
//!
//! With these layouts the five-point Laplacian is a symmetric matrix for the
//! plain Euclidean inner product in all three modes.
//!
//! Fields are stored row-major: in 2-D the value at `(i0, i1)` lives at
//! `i0 * m1 + i1`, so axis 1 is contiguous.

use serde::{Deserialize, Serialize};

use crate::error::{contract, structural, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Neumann,
    Dirichlet,
}

impl Boundary {
    pub fn is_bounded(self) -> bool {
        !matches!(self, Boundary::Periodic)
    }
}

/// Geometry, boundary mode and resolution of a rectangular domain in one or
/// two dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr", into = "DomainRepr")]
pub struct DomainSpec {
    boundary: Boundary,
    dim: usize,
    extents: [f64; 2],
    points: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct DomainRepr {
    boundary: Boundary,
    extents: Vec<f64>,
    points: Vec<usize>,
}

impl TryFrom<DomainRepr> for DomainSpec {
    type Error = Error;

    fn try_from(r: DomainRepr) -> Result<Self> {
        DomainSpec::new(r.boundary, &r.extents, &r.points)
    }
}

impl From<DomainSpec> for DomainRepr {
    fn from(d: DomainSpec) -> Self {
        DomainRepr {
            boundary: d.boundary,
            extents: d.extents[..d.dim].to_vec(),
            points: d.points[..d.dim].to_vec(),
        }
    }
}

impl DomainSpec {
    pub fn new(boundary: Boundary, extents: &[f64], points: &[usize]) -> Result<Self> {
        let dim = extents.len();
        if !(1..=2).contains(&dim) {
            return structural(format!("dimension must be 1 or 2, got {dim}"));
        }
        if points.len() != dim {
            return structural(format!("{} extents but {} point counts", dim, points.len()));
        }
        for a in 0..dim {
            if !(extents[a].is_finite() && extents[a] > 0.0) {
                return structural(format!(
                    "extent on axis {a} must be positive, got {}",
                    extents[a]
                ));
            }
            if points[a] < 3 {
                return structural(format!(
                    "axis {a} needs at least 3 points, got {}",
                    points[a]
                ));
            }
        }
        let mut e = [1.0; 2];
        let mut p = [1usize; 2];
        e[..dim].copy_from_slice(extents);
        p[..dim].copy_from_slice(points);
        Ok(Self {
            boundary,
            dim,
            extents: e,
            points: p,
        })
    }

    pub fn periodic_1d(length: f64, m: usize) -> Result<Self> {
        Self::new(Boundary::Periodic, &[length], &[m])
    }

    pub fn periodic_2d(lx: f64, ly: f64, mx: usize, my: usize) -> Result<Self> {
        Self::new(Boundary::Periodic, &[lx, ly], &[mx, my])
    }

    pub fn with_boundary(self, boundary: Boundary) -> Self {
        Self { boundary, ..self }
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extents[axis]
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn points(&self, axis: usize) -> usize {
        self.points[axis]
    }

    pub fn point_counts(&self) -> &[usize] {
        &self.points[..self.dim]
    }

    /// `(m0, m1)`, with `m1 = 1` in one dimension.
    pub fn shape(&self) -> (usize, usize) {
        (self.points[0], self.points[1])
    }

    pub fn len(&self) -> usize {
        self.points[0] * self.points[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let m = self.points[axis] as f64;
        match self.boundary {
            Boundary::Periodic | Boundary::Neumann => self.extents[axis] / m,
            Boundary::Dirichlet => self.extents[axis] / (m + 1.0),
        }
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        let h = self.spacing(axis);
        let i = i as f64;
        match self.boundary {
            Boundary::Periodic => i * h,
            Boundary::Neumann => (i + 0.5) * h,
            Boundary::Dirichlet => (i + 1.0) * h,
        }
    }

    /// Quadrature weight of a single node (rectangle rule).
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Diameter of the rectangle (bounded case) or length of the longest
    /// diagonal of the period cell (periodic case); both are `√Σ L_i²`.
    pub fn diameter(&self) -> f64 {
        self.extents().iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn index(&self, i0: usize, i1: usize) -> usize {
        i0 * self.points[1] + i1
    }

    /// Node coordinates of flat index `k`, padded with 0 in 1-D.
    pub fn node(&self, k: usize) -> [f64; 2] {
        let (i0, i1) = (k / self.points[1], k % self.points[1]);
        let mut x = [self.coordinate(0, i0), 0.0];
        if self.dim == 2 {
            x[1] = self.coordinate(1, i1);
        }
        x
    }

    pub(crate) fn same_grid(&self, other: &DomainSpec) -> bool {
        self.boundary == other.boundary
            && self.dim == other.dim
            && self.points == other.points
            && self
                .extents
                .iter()
                .zip(other.extents.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }
}

/// A scalar function sampled on the nodes of a [`DomainSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    domain: DomainSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(domain: DomainSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return structural(format!(
                "field has {} values, domain has {} nodes",
                values.len(),
                domain.len()
            ));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite value at node {k}")));
        }
        Ok(Self { domain, values })
    }

    /// Skips the finiteness scan; for internal hot loops whose outputs are
    /// checked by the caller.
    pub(crate) fn from_raw(domain: DomainSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.len());
        Self { domain, values }
    }

    pub fn constant(domain: DomainSpec, c: f64) -> Self {
        Self::from_raw(domain, vec![c; domain.len()])
    }

    pub fn zeros(domain: DomainSpec) -> Self {
        Self::constant(domain, 0.0)
    }

    /// Samples `f` at every node; `f` receives `[x0, x1]` (`x1 = 0` in 1-D).
    pub fn from_fn(domain: DomainSpec, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..domain.len()).map(|k| f(domain.node(k))).collect();
        Self::new(domain, values)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i0: usize, i1: usize) -> f64 {
        self.values[self.domain.index(i0, i1)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L² norm with rectangle-rule weights.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.domain.cell_volume()).sqrt()
    }

    /// Rectangle-rule integral over the domain.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.domain.cell_volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.domain, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self::from_raw(
            self.domain,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn sup_distance(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub(crate) fn check_same(&self, other: &GridField) -> Result<()> {
        if !self.domain.same_grid(&other.domain) {
            return structural("fields live on different grids");
        }
        Ok(())
    }
}

/// Writes `D·∇²x` into `out` for raw node values on `domain`.
pub(crate) fn laplacian_into(domain: &DomainSpec, d: f64, x: &[f64], out: &mut [f64]) {
    let (m0, m1) = domain.shape();
    let bc = domain.boundary();
    out.iter_mut().for_each(|o| *o = 0.0);

    // axis 0 (stride m1)
    let c0 = d / (domain.spacing(0) * domain.spacing(0));
    for i0 in 0..m0 {
        for i1 in 0..m1 {
            let k = i0 * m1 + i1;
            let u = x[k];
            let left = neighbour(bc, i0, m0, false).map_or(ghost(bc, u), |j| x[j * m1 + i1]);
            let right = neighbour(bc, i0, m0, true).map_or(ghost(bc, u), |j| x[j * m1 + i1]);
            out[k] += c0 * (left - 2.0 * u + right);
        }
    }
    if domain.dim() == 2 {
        let c1 = d / (domain.spacing(1) * domain.spacing(1));
        for i0 in 0..m0 {
            let row = &x[i0 * m1..(i0 + 1) * m1];
            let orow = &mut out[i0 * m1..(i0 + 1) * m1];
            for i1 in 0..m1 {
                let u = row[i1];
                let left = neighbour(bc, i1, m1, false).map_or(ghost(bc, u), |j| row[j]);
                let right = neighbour(bc, i1, m1, true).map_or(ghost(bc, u), |j| row[j]);
                orow[i1] += c1 * (left - 2.0 * u + right);
            }
        }
    }
}

#[inline]
fn neighbour(bc: Boundary, i: usize, m: usize, forward: bool) -> Option<usize> {
    match (forward, bc) {
        (true, Boundary::Periodic) => Some((i + 1) % m),
        (false, Boundary::Periodic) => Some((i + m - 1) % m),
        (true, _) => (i + 1 < m).then_some(i + 1),
        (false, _) => i.checked_sub(1),
    }
}

#[inline]
fn ghost(bc: Boundary, u: f64) -> f64 {
    match bc {
        Boundary::Dirichlet => 0.0,
        _ => u,
    }
}

/// `D·∇²` applied to `field` by second-order central differences.
pub fn apply_diffusion(field: &GridField, d: f64) -> GridField {
    let mut out = vec![0.0; field.len()];
    laplacian_into(&field.domain, d, &field.values, &mut out);
    GridField::from_raw(field.domain, out)
}

/// Discrete Dirichlet energy `Σ_edges (Δψ)²/h²`, the first-difference
/// counterpart of `-ψᵀ∇²ψ` (edges to zero ghosts are included in Dirichlet
/// mode, boundary faces carry no flux in Neumann mode).
pub(crate) fn gradient_energy(domain: &DomainSpec, x: &[f64]) -> f64 {
    let (m0, m1) = domain.shape();
    let bc = domain.boundary();
    let mut e = 0.0;
    let axes: &[(usize, usize, usize)] = if domain.dim() == 2 {
        &[(0, m0, m1), (1, m1, 1)]
    } else {
        &[(0, m0, 1)]
    };
    for &(axis, m, stride) in axes {
        let inv_h2 = 1.0 / (domain.spacing(axis) * domain.spacing(axis));
        let lines = domain.len() / m;
        for line in 0..lines {
            let base = if axis == 0 { line } else { line * m1 };
            let at = |i: usize| x[base + i * stride];
            let mut s = 0.0;
            for i in 0..m - 1 {
                let g = at(i + 1) - at(i);
                s += g * g;
            }
            match bc {
                Boundary::Periodic => {
                    let g = at(0) - at(m - 1);
                    s += g * g;
                }
                Boundary::Dirichlet => s += at(0) * at(0) + at(m - 1) * at(m - 1),
                Boundary::Neumann => {}
            }
            e += s * inv_h2;
        }
    }
    e
}

/// `(∫ D|∇ψ|² − σψ²)/(∫ ψ²)` with first-difference gradients, so that the
/// value equals `ψᵀAψ/ψᵀψ` for the discrete operator `A = −D∇² − σ`.
pub fn rayleigh_quotient(psi: &GridField, sigma: &GridField, d: f64) -> Result<f64> {
    psi.check_same(sigma)?;
    let norm2: f64 = psi.values.iter().map(|v| v * v).sum();
    if norm2 == 0.0 {
        return contract("Rayleigh quotient of the zero function");
    }
    let potential: f64 = psi
        .values
        .iter()
        .zip(&sigma.values)
        .map(|(p, s)| s * p * p)
        .sum();
    Ok((d * gradient_energy(&psi.domain, &psi.values) - potential) / norm2)
}
