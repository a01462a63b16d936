#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qcyield_core::{Boundary, DomainSpec, GridField, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Second-difference matrix of one axis, assembled from the stencil.
pub fn axis_laplacian(boundary: Boundary, extent: f64, m: usize) -> DMatrix<f64> {
    let h = match boundary {
        Boundary::Dirichlet => extent / (m as f64 + 1.0),
        _ => extent / m as f64,
    };
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        a[(i, i)] = -2.0;
        if i + 1 < m {
            a[(i, i + 1)] = 1.0;
            a[(i + 1, i)] = 1.0;
        }
    }
    match boundary {
        Boundary::Periodic => {
            a[(0, m - 1)] += 1.0;
            a[(m - 1, 0)] += 1.0;
        }
        Boundary::Neumann => {
            a[(0, 0)] += 1.0;
            a[(m - 1, m - 1)] += 1.0;
        }
        Boundary::Dirichlet => {}
    }
    a / (h * h)
}

/// Dense `∇²` on the full grid (Kronecker sum in 2-D, row-major storage).
pub fn dense_laplacian(domain: &DomainSpec) -> DMatrix<f64> {
    let b = domain.boundary();
    let l0 = axis_laplacian(b, domain.extent(0), domain.points(0));
    if domain.dim() == 1 {
        return l0;
    }
    let l1 = axis_laplacian(b, domain.extent(1), domain.points(1));
    let i0 = DMatrix::<f64>::identity(domain.points(0), domain.points(0));
    let i1 = DMatrix::<f64>::identity(domain.points(1), domain.points(1));
    l0.kronecker(&i1) + i0.kronecker(&l1)
}

/// Dense `−D∇² − diag(μ)`.
pub fn dense_schrodinger(mu: &GridField, d: f64) -> DMatrix<f64> {
    let mut a = dense_laplacian(mu.domain()) * -d;
    for (k, &m) in mu.values().iter().enumerate() {
        a[(k, k)] -= m;
    }
    a
}

pub fn sorted_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Damped Newton with dense LU on `D∇²p + p(μ − νp) − δhρ(p) = 0`.
pub fn dense_newton(params: &ModelParams, start: &[f64]) -> Vec<f64> {
    let lap = dense_laplacian(params.domain()) * params.d();
    let (mu, nu, h) = (params.mu().values(), params.nu().values(), params.h().values());
    let (delta, eps, rho) = (params.delta(), params.epsilon(), params.rho());
    let residual = |p: &DVector<f64>| -> DVector<f64> {
        let mut r = &lap * p;
        for k in 0..p.len() {
            r[k] += p[k] * (mu[k] - nu[k] * p[k]) - delta * h[k] * rho.value(p[k], eps);
        }
        r
    };
    let mut p = DVector::from_column_slice(start);
    let mut r = residual(&p);
    for _ in 0..200 {
        if r.norm() < 1e-13 {
            break;
        }
        let mut j = lap.clone();
        for k in 0..p.len() {
            j[(k, k)] += mu[k] - 2.0 * nu[k] * p[k] - delta * h[k] * rho.derivative(p[k], eps);
        }
        let step = j.lu().solve(&(-&r)).expect("nonsingular Jacobian");
        let mut t = 1.0;
        loop {
            let cand = &p + &step * t;
            let rc = residual(&cand);
            if rc.norm() < (1.0 - 1e-4 * t) * r.norm() || t < 1e-8 {
                p = cand;
                r = rc;
                break;
            }
            t *= 0.5;
        }
    }
    p.iter().copied().collect()
}

/// `μ⁺` on a random fraction of the nodes, `μ⁻` elsewhere.
pub fn two_valued(domain: DomainSpec, frac: f64, hi: f64, lo: f64, seed: u64) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..domain.len())
        .map(|_| if rng.random::<f64>() < frac { hi } else { lo })
        .collect();
    GridField::new(domain, v).unwrap()
}

/// `μ⁺` on the first `frac` of every axis-0 line, `μ⁻` elsewhere.
pub fn patch_1d(m: usize, frac: f64, hi: f64, lo: f64) -> GridField {
    let d = DomainSpec::periodic_1d(1.0, m).unwrap();
    let cut = (frac * m as f64).round() as usize;
    GridField::new(d, (0..m).map(|i| if i < cut { hi } else { lo }).collect()).unwrap()
}

pub fn random_field(domain: DomainSpec, lo: f64, hi: f64, seed: u64) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GridField::new(domain, (0..domain.len()).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
