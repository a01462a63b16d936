//! Linear solves for operators of the form `K·I − D∇² + diag(b)`.
//!
//! The constant-coefficient part `c·I − D∇²` is diagonalised exactly by the
//! tensor product of the one-dimensional eigenbases of the grid Laplacian
//! (Fourier, cosine or sine vectors depending on the boundary mode). That
//! transform is used as a direct solver when `b` is constant and as the
//! preconditioner for conjugate gradients (SPD case) or MINRES (symmetric
//! indefinite case) otherwise.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{contract, Error, Result};
use crate::grid::{laplacian_into, Boundary, DomainSpec, GridField};

/// Orthonormal eigenbasis of the 1-D matrix `−d²/dx²` on one axis.
#[derive(Clone, Debug)]
struct AxisBasis {
    /// Eigenvalues (nonnegative), one per column of `vectors`.
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl AxisBasis {
    fn trivial() -> Self {
        Self {
            values: vec![0.0],
            vectors: DMatrix::identity(1, 1),
        }
    }

    fn new(bc: Boundary, m: usize, h: f64) -> Self {
        let inv_h2 = 1.0 / (h * h);
        let mf = m as f64;
        let mut values = Vec::with_capacity(m);
        let mut vectors = DMatrix::zeros(m, m);
        match bc {
            Boundary::Dirichlet => {
                let norm = (2.0 / (mf + 1.0)).sqrt();
                for k in 1..=m {
                    let s = (PI * k as f64 / (2.0 * (mf + 1.0))).sin();
                    values.push(4.0 * inv_h2 * s * s);
                    for i in 0..m {
                        vectors[(i, k - 1)] =
                            norm * (PI * k as f64 * (i + 1) as f64 / (mf + 1.0)).sin();
                    }
                }
            }
            Boundary::Neumann => {
                for k in 0..m {
                    let s = (PI * k as f64 / (2.0 * mf)).sin();
                    values.push(4.0 * inv_h2 * s * s);
                    let norm = if k == 0 {
                        (1.0 / mf).sqrt()
                    } else {
                        (2.0 / mf).sqrt()
                    };
                    for i in 0..m {
                        vectors[(i, k)] = norm * (PI * k as f64 * (i as f64 + 0.5) / mf).cos();
                    }
                }
            }
            Boundary::Periodic => {
                let mut col = 0;
                let mut push = |col: &mut usize, k: usize, f: &dyn Fn(f64) -> f64, norm: f64| {
                    let s = (PI * k as f64 / mf).sin();
                    values.push(4.0 * inv_h2 * s * s);
                    for i in 0..m {
                        vectors[(i, *col)] = norm * f(2.0 * PI * k as f64 * i as f64 / mf);
                    }
                    *col += 1;
                };
                push(&mut col, 0, &|_| 1.0, (1.0 / mf).sqrt());
                for k in 1..m.div_ceil(2) {
                    push(&mut col, k, &f64::cos, (2.0 / mf).sqrt());
                    push(&mut col, k, &f64::sin, (2.0 / mf).sqrt());
                }
                if m % 2 == 0 {
                    push(&mut col, m / 2, &f64::cos, (1.0 / mf).sqrt());
                }
                debug_assert_eq!(col, m);
            }
        }
        Self { values, vectors }
    }
}

/// Exact solver for `(c·I − D∇²)x = r` on a fixed grid.
#[derive(Clone, Debug)]
pub struct SpectralSolver {
    domain: DomainSpec,
    axis0: AxisBasis,
    axis1: AxisBasis,
}

impl SpectralSolver {
    pub fn new(domain: &DomainSpec) -> Self {
        let bc = domain.boundary();
        let axis0 = AxisBasis::new(bc, domain.points(0), domain.spacing(0));
        let axis1 = if domain.dim() == 2 {
            AxisBasis::new(bc, domain.points(1), domain.spacing(1))
        } else {
            AxisBasis::trivial()
        };
        Self {
            domain: *domain,
            axis0,
            axis1,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    /// Smallest eigenvalue of `−∇²` on this grid (0 unless Dirichlet).
    pub fn min_laplacian_eigenvalue(&self) -> f64 {
        let m0 = self
            .axis0
            .values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let m1 = self
            .axis1
            .values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        m0 + m1
    }

    /// Solves `(c − D∇²)x = rhs` into `out`; requires `c + D·λ_min > 0`.
    pub fn solve_into(&self, c: f64, d: f64, rhs: &[f64], out: &mut [f64]) {
        let (m0, m1) = self.domain.shape();
        // Row-major (m0, m1) data viewed as a column-major (m1, m0) matrix Y = Xᵀ,
        // so the transform Q0ᵀ X Q1 becomes Q1ᵀ Y Q0.
        let y = DMatrix::from_column_slice(m1, m0, rhs);
        let q0 = &self.axis0.vectors;
        let q1 = &self.axis1.vectors;
        let mut t = if m1 == 1 { y * q0 } else { q1.tr_mul(&y) * q0 };
        for j in 0..m0 {
            for i in 0..m1 {
                t[(i, j)] /= c + d * (self.axis0.values[j] + self.axis1.values[i]);
            }
        }
        let back = if m1 == 1 {
            t * q0.transpose()
        } else {
            q1 * t * q0.transpose()
        };
        out.copy_from_slice(back.as_slice());
    }
}

/// The symmetric operator `x ↦ (K + b)x − D∇²x` on a grid.
#[derive(Clone, Debug)]
pub struct ShiftedOperator {
    solver: SpectralSolver,
    d: f64,
    shift: f64,
    potential: Vec<f64>,
    precond_shift: f64,
    constant_potential: bool,
}

/// Iteration cap factor for CG: `20·N` iterations.
const CG_CAP_FACTOR: usize = 20;
pub const CG_RELATIVE_TOL: f64 = 1e-10;

impl ShiftedOperator {
    pub fn new(domain: &DomainSpec, d: f64, shift: f64, potential: Option<&[f64]>) -> Self {
        Self::with_solver(SpectralSolver::new(domain), d, shift, potential)
    }

    pub fn with_solver(
        solver: SpectralSolver,
        d: f64,
        shift: f64,
        potential: Option<&[f64]>,
    ) -> Self {
        let n = solver.domain.len();
        let potential = potential.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let (lo, hi) = min_max(&potential);
        let constant_potential = hi - lo <= 1e-14 * hi.abs().max(lo.abs()).max(1.0);
        let mean = potential.iter().sum::<f64>() / n as f64;
        Self {
            solver,
            d,
            shift,
            potential,
            precond_shift: shift + mean,
            constant_potential,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.solver.domain
    }

    /// Lower bound on the spectrum, `K + min b + D·λ_min(−∇²)`.
    pub fn spectrum_lower_bound(&self) -> f64 {
        let (lo, _) = min_max(&self.potential);
        self.shift + lo + self.d * self.solver.min_laplacian_eigenvalue()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        laplacian_into(&self.solver.domain, self.d, x, out);
        for ((o, &xi), &b) in out.iter_mut().zip(x).zip(&self.potential) {
            *o = (self.shift + b) * xi - *o;
        }
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        self.solver.solve_into(self.precond_shift, self.d, r, z);
    }

    /// Conjugate-gradient solve; the operator must be positive definite.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if self.spectrum_lower_bound() <= 0.0 {
            return contract(format!(
                "shifted operator is not positive definite (spectrum bound {:e})",
                self.spectrum_lower_bound()
            ));
        }
        let n = rhs.len();
        let mut x = vec![0.0; n];
        if self.constant_potential {
            self.precondition(rhs, &mut x);
            return Ok(x);
        }
        let bnorm = norm(rhs);
        if bnorm == 0.0 {
            return Ok(x);
        }
        let tol = CG_RELATIVE_TOL * bnorm;
        let mut r = rhs.to_vec();
        let mut z = vec![0.0; n];
        self.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        let cap = CG_CAP_FACTOR * n;
        for it in 0..cap {
            self.apply_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                return Err(Error::Numerical(format!(
                    "CG met non-positive curvature {pap:e} at iteration {it}"
                )));
            }
            let alpha = rz / pap;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            let rn = norm(&r);
            if rn <= tol {
                return Ok(x);
            }
            self.precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        Err(Error::NoConvergence {
            what: "conjugate gradient",
            iterations: cap,
            residual: norm(&r) / bnorm,
        })
    }

    /// MINRES solve for symmetric, possibly indefinite operators, using the
    /// spectral preconditioner `(|c| + 1 − D∇²)⁻¹` (always SPD).
    pub fn solve_indefinite(&self, rhs: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
        let precond_shift = self.precond_shift.abs().max(1.0);
        let pre = |r: &[f64], z: &mut [f64]| self.solver.solve_into(precond_shift, self.d, r, z);
        let n = rhs.len();
        let bnorm = norm(rhs);
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let cap = CG_CAP_FACTOR * n;
        let mut used = 0;
        // Restart a few times on the true residual in case the recurrence
        // estimate drifts from it.
        for _ in 0..4 {
            let mut r0 = vec![0.0; n];
            self.apply_into(&x, &mut r0);
            for (ri, bi) in r0.iter_mut().zip(rhs) {
                *ri = bi - *ri;
            }
            if norm(&r0) <= rel_tol * bnorm {
                return Ok(x);
            }
            let (dx, its) = minres(
                |v, out| self.apply_into(v, out),
                pre,
                &r0,
                rel_tol * bnorm,
                cap - used,
            );
            used += its;
            axpy(1.0, &dx, &mut x);
        }
        let mut r = vec![0.0; n];
        self.apply_into(&x, &mut r);
        let res = r
            .iter()
            .zip(rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / bnorm;
        if res <= rel_tol * 10.0 {
            Ok(x)
        } else {
            Err(Error::NoConvergence {
                what: "MINRES",
                iterations: used,
                residual: res,
            })
        }
    }
}

/// Preconditioned MINRES (Paige–Saunders). Returns the update and the number
/// of iterations taken. `abs_tol` applies to the preconditioned residual
/// estimate.
fn minres(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    abs_tol: f64,
    max_iter: usize,
) -> (Vec<f64>, usize) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut y = vec![0.0; n];
    precond(&r1, &mut y);
    let beta1 = dot(&r1, &y).max(0.0).sqrt();
    if beta1 == 0.0 {
        return (x, 0);
    }
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    // Tolerance on the preconditioned residual, scaled to the unpreconditioned
    // one through the ratio at the start.
    let scale = beta1 / norm(b);
    let tol = abs_tol * scale;
    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        apply(&v, &mut y);
        if itn >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        precond(&r2, &mut y);
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        let w1 = std::mem::replace(&mut w2, w.clone());
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        if phibar <= tol || beta == 0.0 {
            return (x, itn);
        }
    }
    (x, max_iter)
}

/// Solves `(K·I − D∇² + b·I)w = rhs` by preconditioned conjugate gradients.
pub fn solve_shifted(
    rhs: &GridField,
    d: f64,
    shift: f64,
    potential: &GridField,
) -> Result<GridField> {
    rhs.check_same(potential)?;
    let op = ShiftedOperator::new(rhs.domain(), d, shift, Some(potential.values()));
    let w = op.solve(rhs.values())?;
    GridField::new(*rhs.domain(), w)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}
