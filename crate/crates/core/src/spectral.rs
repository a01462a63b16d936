//! Principal and second eigenvalues of the Schrödinger operator
//! `−D∇² − μ(x)` on the discrete grid.
//!
//! Both are computed by block inverse iteration on the shifted operator
//! `K − D∇² − μ` with `K = max μ + 1`, which is positive definite, so each
//! step is a batch of conjugate-gradient solves followed by a Rayleigh–Ritz
//! step. The second eigenvalue is obtained by deflating the principal
//! eigenvector out of every iterate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::grid::{laplacian_into, Boundary, DomainSpec, GridField};
use crate::linalg::ShiftedOperator;

/// Eigenvalue of `−D∇² − μ` with its eigenfunction, normalised so that
/// `‖φ‖∞ = 1` and `φ > 0` for the principal pair.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub lambda: f64,
    pub phi: GridField,
    /// `min φ` over the grid.
    pub phi_min: f64,
    /// `‖(−D∇² − μ)φ − λφ‖₂ / ‖φ‖₂` at exit.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EigenOptions {
    /// Stop once successive eigenvalue estimates differ by less than this.
    pub eigenvalue_tol: f64,
    /// ... and the relative residual is below this.
    pub residual_tol: f64,
    pub max_iterations: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            eigenvalue_tol: 1e-10,
            residual_tol: 1e-8,
            max_iterations: 100_000,
        }
    }
}

struct Schrodinger<'a> {
    domain: DomainSpec,
    d: f64,
    mu: &'a [f64],
    shifted: ShiftedOperator,
}

impl<'a> Schrodinger<'a> {
    fn new(mu: &'a GridField, d: f64) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return contract(format!("diffusion coefficient must be positive, got {d}"));
        }
        let shift = mu.max() + 1.0;
        let neg_mu: Vec<f64> = mu.values().iter().map(|m| -m).collect();
        Ok(Self {
            domain: *mu.domain(),
            d,
            mu: mu.values(),
            shifted: ShiftedOperator::new(mu.domain(), d, shift, Some(&neg_mu)),
        })
    }

    /// `(−D∇² − μ)x`.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        laplacian_into(&self.domain, self.d, x, out);
        for ((o, xi), m) in out.iter_mut().zip(x).zip(self.mu) {
            *o = -*o - m * xi;
        }
    }

    /// Block inverse iteration with Rayleigh–Ritz extraction. Every iterate
    /// is kept orthogonal to the unit vectors in `deflate`; the lowest Ritz
    /// pair is returned.
    fn inverse_iteration(
        &self,
        start: DMatrix<f64>,
        deflate: &[Vec<f64>],
        opts: &EigenOptions,
    ) -> Result<(f64, Vec<f64>, f64, usize)> {
        let n = start.nrows();
        let p = start.ncols();
        let project = |m: &mut DMatrix<f64>| {
            for q in deflate {
                let qv = DVector::from_column_slice(q);
                for mut col in m.column_iter_mut() {
                    let c = col.dot(&qv);
                    col.axpy(-c, &qv, 1.0);
                }
            }
        };
        let mut x = start;
        project(&mut x);
        x = orthonormalize(x)?;
        let mut lambda = f64::INFINITY;
        let mut res = f64::INFINITY;
        let mut best = (f64::INFINITY, 0);
        for it in 1..=opts.max_iterations {
            let cols: Vec<Result<Vec<f64>>> = (0..p)
                .into_par_iter()
                .map(|j| self.shifted.solve(x.column(j).as_slice()))
                .collect();
            let mut y = DMatrix::zeros(n, p);
            for (j, c) in cols.into_iter().enumerate() {
                y.set_column(j, &DVector::from_vec(c?));
            }
            project(&mut y);
            let y = orthonormalize(y)?;
            let mut ay = DMatrix::zeros(n, p);
            let mut buf = vec![0.0; n];
            for j in 0..p {
                self.apply(y.column(j).as_slice(), &mut buf);
                ay.set_column(j, &DVector::from_column_slice(&buf));
            }
            let h = y.tr_mul(&ay);
            let h = (&h + h.transpose()) * 0.5;
            let eig = SymmetricEigen::new(h);
            let mut order: Vec<usize> = (0..p).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let mut v = DMatrix::zeros(p, p);
            for (k, &j) in order.iter().enumerate() {
                v.set_column(k, &eig.eigenvectors.column(j));
            }
            x = &y * &v;
            let ax0 = &ay * v.column(0);
            let theta = eig.eigenvalues[order[0]];
            res = (&ax0 - x.column(0) * theta).norm() / x.column(0).norm();
            let change = (theta - lambda).abs();
            lambda = theta;
            if change < opts.eigenvalue_tol && res <= opts.residual_tol {
                return Ok((lambda, x.column(0).iter().copied().collect(), res, it));
            }
            if res < 0.5 * best.0 {
                best = (res, it);
            } else if it - best.1 > STALL_ITERATIONS {
                return Err(Error::NoConvergence {
                    what: "inverse power iteration (stalled)",
                    iterations: it,
                    residual: res,
                });
            }
        }
        Err(Error::NoConvergence {
            what: "inverse power iteration",
            iterations: opts.max_iterations,
            residual: res,
        })
    }
}

fn orthonormalize(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = m.qr().q();
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("iterate block collapsed".into()));
    }
    Ok(q)
}

/// Deterministic start block: the constant vector followed by low-discrepancy
/// oscillations with no symmetry that would hide a whole eigenspace.
fn start_block(n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |k, j| {
        if j == 0 {
            1.0
        } else {
            let t = k as f64;
            let a = j as f64;
            (0.37 * a * t + 0.1 * a).sin() + 0.5 * (1.3 * t * (t + a).sqrt() + 0.7 * a).cos()
        }
    })
}

const PRINCIPAL_BLOCK: usize = 4;
/// Iterations without halving the residual before giving up.
const STALL_ITERATIONS: usize = 500;
const SECOND_BLOCK: usize = 8;

/// Smallest eigenvalue of `−D∇² − μ` and its positive eigenfunction.
pub fn principal_eigenpair(mu: &GridField, d: f64) -> Result<EigenPair> {
    principal_eigenpair_with(mu, d, &EigenOptions::default())
}

pub fn principal_eigenpair_with(mu: &GridField, d: f64, opts: &EigenOptions) -> Result<EigenPair> {
    let op = Schrodinger::new(mu, d)?;
    let (lo, hi) = crate::linalg::min_max(mu.values());
    if lo == hi && mu.domain().boundary() != Boundary::Dirichlet {
        // Constants are exact eigenfunctions when no boundary condition
        // pins the value.
        return Ok(EigenPair {
            lambda: -lo,
            phi: GridField::constant(*mu.domain(), 1.0),
            phi_min: 1.0,
            residual: 0.0,
            iterations: 0,
        });
    }
    let block = PRINCIPAL_BLOCK.min(mu.len());
    let (lambda, x, residual, iterations) =
        op.inverse_iteration(start_block(mu.len(), block), &[], opts)?;
    // Fix the sign by the sum (the Perron vector has one sign) and scale to sup = 1.
    let sign = if x.iter().sum::<f64>() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let sup = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let phi: Vec<f64> = x.iter().map(|v| sign * v / sup).collect();
    let phi = GridField::new(*mu.domain(), phi)?;
    let phi_min = phi.min();
    if phi_min <= 0.0 {
        return Err(Error::Numerical(format!(
            "principal eigenfunction is not positive (min {phi_min:e})"
        )));
    }
    Ok(EigenPair {
        lambda,
        phi,
        phi_min,
        residual,
        iterations,
    })
}

/// Second-smallest eigenvalue of `−D∇² − μ`.
pub fn second_eigenvalue(mu: &GridField, d: f64) -> Result<f64> {
    let principal = principal_eigenpair(mu, d)?;
    second_eigenvalue_given(mu, d, &principal)
}

/// Second eigenvalue, reusing an already computed principal pair for the
/// deflation.
pub fn second_eigenvalue_given(mu: &GridField, d: f64, principal: &EigenPair) -> Result<f64> {
    let opts = EigenOptions::default();
    let op = Schrodinger::new(mu, d)?;
    let norm = principal
        .phi
        .values()
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    let q: Vec<f64> = principal.phi.values().iter().map(|v| v / norm).collect();
    let n = mu.len();
    let block = SECOND_BLOCK.min(n - 1);
    let (lambda, _, _, _) = op.inverse_iteration(
        start_block(n, block + 1).columns(1, block).into_owned(),
        &[q],
        &opts,
    )?;
    Ok(lambda)
}

/// `D(π/d)² − max μ`, with `d` the domain diameter (bounded) or the longest
/// diagonal of the period cell (periodic).
pub fn lambda2_lower_bound(domain: &DomainSpec, d: f64, mu_max: f64) -> f64 {
    let diam = domain.diameter();
    d * (std::f64::consts::PI / diam).powi(2) - mu_max
}

/// `λ₁` of `−D∇² − η(x/L)` on `[0, L]^N` for each `L`, computed on the unit
/// cell as `−(D/L²)∇² − η`.
pub fn lambda1_scaling_curve(eta: &GridField, d: f64, lengths: &[f64]) -> Result<Vec<(f64, f64)>> {
    let dom = eta.domain();
    if dom.boundary() != Boundary::Periodic
        || dom.extents().iter().any(|&e| (e - 1.0).abs() > 1e-12)
    {
        return contract("scaling pattern must live on the periodic unit cell");
    }
    if eta.integral() <= 0.0 {
        return contract("scaling pattern must have positive integral");
    }
    lengths
        .iter()
        .map(|&l| {
            if !(l > 0.0) {
                return contract(format!("cell size must be positive, got {l}"));
            }
            Ok((l, principal_eigenpair(eta, d / (l * l))?.lambda))
        })
        .collect()
}
