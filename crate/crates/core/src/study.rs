//! The fragmentation experiment: landscapes across aggregation levels, the
//! thresholds `δ₁`, `δ₂` of each, polynomial fits with prediction bands, and
//! the gap identity under a uniform shift of the growth rate.

use std::sync::mpsc;
use std::time::Instant;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::grid::{DomainSpec, GridField};
use crate::landscape::{generate_with, to_growth_field, AnnealSchedule};
use crate::spectral::{principal_eigenpair_with, EigenOptions};
use crate::stats::student_t_quantile;
use crate::steady::{thresholds, ModelParams};

/// Aggregation targets: evenly spread over a range, or listed explicitly
/// (cycled when there are more samples than entries).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum STargets {
    Range { lo: u64, hi: u64 },
    List(Vec<u64>),
}

impl STargets {
    pub fn target(&self, index: usize, samples: usize) -> u64 {
        match self {
            STargets::Range { lo, hi } => {
                let frac = if samples <= 1 {
                    0.5
                } else {
                    index as f64 / (samples - 1) as f64
                };
                let s = *lo as f64 + frac * (*hi as f64 - *lo as f64);
                2 * (s / 2.0).round() as u64
            }
            STargets::List(v) => v[index % v.len()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub samples: usize,
    pub s_targets: STargets,
    /// Landscape side `n`.
    pub lattice: usize,
    pub favorable_fraction: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    /// PDE grid points per axis; a multiple of `lattice`.
    pub grid_points: usize,
    /// Side of the square period cell.
    pub extent: f64,
    pub d: f64,
    pub nu: f64,
    pub h: f64,
    pub sweeps: usize,
    pub anneal: AnnealSchedule,
    pub master_seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            s_targets: STargets::Range { lo: 3400, hi: 4900 },
            lattice: 50,
            favorable_fraction: 0.2,
            mu_plus: 10.0,
            mu_minus: 0.0,
            grid_points: 100,
            extent: 1.0,
            d: 1.0,
            nu: 1.0,
            h: 1.0,
            sweeps: 500,
            anneal: AnnealSchedule::default(),
            master_seed: 1,
            threads: None,
        }
    }
}

impl StudyConfig {
    /// Seed of sample `index`: stream `index` of a ChaCha generator keyed by
    /// the master seed, so each sample is reproducible on its own.
    pub fn sample_seed(&self, index: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index as u64);
        rng.random()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub index: usize,
    pub seed: u64,
    pub target_s: u64,
    pub s: u64,
    pub lambda1: f64,
    pub phi_min: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Seconds spent on this sample; not part of the deterministic output.
    pub wall_time: f64,
    /// `None` for a usable record; otherwise why it is excluded.
    pub failure: Option<String>,
}

impl StudyRecord {
    pub fn is_usable(&self) -> bool {
        self.failure.is_none()
    }
}

fn run_sample(cfg: &StudyConfig, domain: &DomainSpec, index: usize) -> StudyRecord {
    let start = Instant::now();
    let seed = cfg.sample_seed(index);
    let target_s = cfg.s_targets.target(index, cfg.samples);
    let mut rec = StudyRecord {
        index,
        seed,
        target_s,
        s: 0,
        lambda1: f64::NAN,
        phi_min: f64::NAN,
        delta1: f64::NAN,
        delta2: f64::NAN,
        wall_time: 0.0,
        failure: None,
    };
    let outcome = (|| -> Result<()> {
        let l = generate_with(cfg.lattice, cfg.favorable_fraction, target_s, seed, cfg.sweeps, &cfg.anneal)?;
        rec.s = l.s();
        let mu = to_growth_field(&l, cfg.mu_plus, cfg.mu_minus, domain)?;
        let params = ModelParams::new(
            cfg.d,
            mu,
            GridField::constant(*domain, cfg.nu),
            GridField::constant(*domain, cfg.h),
            0.0,
            None,
        )?;
        rec.lambda1 = params.lambda1();
        rec.phi_min = params.eigenpair().phi_min;
        if rec.lambda1 >= 0.0 {
            rec.failure = Some(format!("lambda1 = {:e} is nonnegative", rec.lambda1));
            return Ok(());
        }
        let t = thresholds(&params, params.eigenpair())?;
        rec.delta1 = t.delta1;
        rec.delta2 = t.delta2;
        Ok(())
    })();
    if let Err(e) = outcome {
        warn!("sample {index} failed: {e}");
        rec.failure = Some(e.to_string());
    }
    rec.wall_time = start.elapsed().as_secs_f64();
    rec
}

/// Runs every sample, handing each record to `sink` as soon as it is done
/// (in completion order), and returns all records sorted by index.
pub fn run_study(cfg: &StudyConfig, mut sink: impl FnMut(&StudyRecord)) -> Result<Vec<StudyRecord>> {
    if cfg.samples == 0 {
        return contract("a study needs at least one sample");
    }
    if let STargets::List(v) = &cfg.s_targets {
        if v.is_empty() {
            return contract("the list of aggregation targets is empty");
        }
    }
    let domain = DomainSpec::periodic_2d(cfg.extent, cfg.extent, cfg.grid_points, cfg.grid_points)?;
    let pool = match cfg.threads {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build a pool of {n} threads: {e}")))?,
        ),
        None => None,
    };
    let (tx, rx) = mpsc::channel::<StudyRecord>();
    let mut records = Vec::with_capacity(cfg.samples);
    let work = |tx: mpsc::Sender<StudyRecord>| {
        (0..cfg.samples).into_par_iter().for_each_with(tx, |tx, i| {
            let _ = tx.send(run_sample(cfg, &domain, i));
        });
    };
    std::thread::scope(|scope| {
        let handle = scope.spawn(move || match &pool {
            Some(p) => p.install(|| work(tx)),
            None => work(tx),
        });
        for rec in rx {
            sink(&rec);
            records.push(rec);
        }
        handle.join().expect("study workers panicked");
    });
    records.sort_by_key(|r| r.index);
    info!(
        "study finished: {} of {} samples usable",
        records.iter().filter(|r| r.is_usable()).count(),
        records.len()
    );
    Ok(records)
}

/// CSV with a header row; failed samples keep their row with empty values.
pub fn write_records_csv(records: &[StudyRecord], mut w: impl std::io::Write) -> Result<()> {
    writeln!(w, "index,seed,target_s,s,lambda1,phi_min,delta1,delta2,status")?;
    for r in records {
        writeln!(w, "{}", record_csv_line(r))?;
    }
    Ok(())
}

pub fn record_csv_line(r: &StudyRecord) -> String {
    let num = |v: f64| if v.is_finite() { format!("{v}") } else { String::new() };
    let status = match &r.failure {
        None => "ok".to_string(),
        Some(m) => format!("\"{}\"", m.replace('"', "'")),
    };
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.index,
        r.seed,
        r.target_s,
        r.s,
        num(r.lambda1),
        num(r.phi_min),
        num(r.delta1),
        num(r.delta2),
        status
    )
}

/// Legendre polynomials `P_0..P_degree` at `t ∈ [−1, 1]`.
fn legendre(t: f64, degree: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(degree + 1);
    p.push(1.0);
    if degree >= 1 {
        p.push(t);
    }
    for k in 1..degree {
        let k_f = k as f64;
        let next = ((2.0 * k_f + 1.0) * t * p[k] - k_f * p[k - 1]) / (k_f + 1.0);
        p.push(next);
    }
    p
}

/// Least-squares polynomial in the Legendre basis of the rescaled abscissa,
/// with normal-theory prediction bands.
#[derive(Clone, Debug, Serialize)]
pub struct PolyFit {
    pub degree: usize,
    /// Coefficients of `P_k((x − c)/r)`.
    pub coefficients: Vec<f64>,
    pub x_center: f64,
    pub x_radius: f64,
    /// Residual standard error `σ̂`.
    pub sigma: f64,
    pub dof: usize,
    /// `t_{1 − (1−c)/2, dof}`.
    pub t_quantile: f64,
    #[serde(skip)]
    r: DMatrix<f64>,
}

impl PolyFit {
    pub fn fit(x: &[f64], y: &[f64], degree: usize, certainty: f64) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return contract(format!("{} abscissae for {} values", n, y.len()));
        }
        if n <= degree + 1 {
            return contract(format!("a degree-{degree} fit needs more than {} points, got {n}", degree + 1));
        }
        if !(certainty > 0.0 && certainty < 1.0) {
            return contract(format!("certainty level must lie in (0, 1), got {certainty}"));
        }
        let (lo, hi) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let x_center = 0.5 * (lo + hi);
        let x_radius = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
        let p = degree + 1;
        let mut design = DMatrix::zeros(n, p);
        for (i, &xi) in x.iter().enumerate() {
            for (k, v) in legendre((xi - x_center) / x_radius, degree).into_iter().enumerate() {
                design[(i, k)] = v;
            }
        }
        let qr = design.clone().qr();
        let r = qr.r();
        let diag_max = (0..p).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
        if (0..p).any(|k| r[(k, k)].abs() <= 1e-10 * diag_max) {
            return Err(Error::Numerical(format!(
                "design matrix is rank deficient at degree {degree}; use a lower degree"
            )));
        }
        let qty = qr.q().tr_mul(&DVector::from_column_slice(y));
        let coef = r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let resid = DVector::from_column_slice(y) - &design * &coef;
        let dof = n - p;
        let sigma = (resid.norm_squared() / dof as f64).sqrt();
        let t_quantile = student_t_quantile(1.0 - 0.5 * (1.0 - certainty), dof as f64)?;
        Ok(Self {
            degree,
            coefficients: coef.iter().copied().collect(),
            x_center,
            x_radius,
            sigma,
            dof,
            t_quantile,
            r,
        })
    }

    fn basis(&self, x: f64) -> DVector<f64> {
        DVector::from_vec(legendre((x - self.x_center) / self.x_radius, self.degree))
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.basis(x)
            .iter()
            .zip(&self.coefficients)
            .map(|(b, c)| b * c)
            .sum()
    }

    /// `x₀ᵀ(XᵀX)⁻¹x₀ = ‖R⁻ᵀx₀‖²`.
    pub fn leverage(&self, x: f64) -> f64 {
        let z = self
            .r
            .transpose()
            .solve_lower_triangular(&self.basis(x))
            .expect("R has a nonzero diagonal");
        z.norm_squared()
    }

    /// Half-width of the prediction interval at `x`.
    pub fn half_width(&self, x: f64) -> f64 {
        self.t_quantile * self.sigma * (1.0 + self.leverage(x)).sqrt()
    }

    pub fn lower(&self, x: f64) -> f64 {
        self.predict(x) - self.half_width(x)
    }

    pub fn upper(&self, x: f64) -> f64 {
        self.predict(x) + self.half_width(x)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub degree: usize,
    pub certainty: f64,
    pub delta1: PolyFit,
    pub delta2: PolyFit,
    pub s_min: f64,
    pub s_max: f64,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub s: f64,
    pub delta1_fit: f64,
    pub delta1_lo: f64,
    pub delta2_fit: f64,
    pub delta2_up: f64,
}

impl FitResult {
    /// The fitted curves and bands at `points` evenly spaced values of `s`.
    pub fn curve(&self, points: usize) -> Vec<CurvePoint> {
        let points = points.max(2);
        (0..points)
            .map(|i| {
                let s = self.s_min + (self.s_max - self.s_min) * i as f64 / (points - 1) as f64;
                CurvePoint {
                    s,
                    delta1_fit: self.delta1.predict(s),
                    delta1_lo: self.delta1.lower(s),
                    delta2_fit: self.delta2.predict(s),
                    delta2_up: self.delta2.upper(s),
                }
            })
            .collect()
    }
}

/// Fits `δ₁(s)` and `δ₂(s)` over the usable records.
pub fn fit_polynomial(records: &[StudyRecord], degree: usize, certainty: f64) -> Result<FitResult> {
    let usable: Vec<&StudyRecord> = records.iter().filter(|r| r.is_usable()).collect();
    let s: Vec<f64> = usable.iter().map(|r| r.s as f64).collect();
    let d1: Vec<f64> = usable.iter().map(|r| r.delta1).collect();
    let d2: Vec<f64> = usable.iter().map(|r| r.delta2).collect();
    let delta1 = PolyFit::fit(&s, &d1, degree, certainty)?;
    let delta2 = PolyFit::fit(&s, &d2, degree, certainty)?;
    let (s_min, s_max) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(FitResult {
        degree,
        certainty,
        delta1,
        delta2,
        s_min,
        s_max,
        samples: usable.len(),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GapRow {
    pub mu_minus: f64,
    pub mu_plus: f64,
    /// `λ₁,₀ − μ⁻`.
    pub lambda1: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub gap: f64,
    /// `(1 − μ⁻/λ₁,₀)²(δ₂,₀ − δ₁,₀)`.
    pub gap_identity: f64,
    pub relative_gap: f64,
    /// From an independent eigen-solve of `μ₀ + μ⁻`.
    pub lambda1_direct: f64,
    pub delta1_direct: f64,
    pub delta2_direct: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub lambda1_base: f64,
    pub phi_min_base: f64,
    pub rows: Vec<GapRow>,
    /// `max |gap − gap_identity|`.
    pub identity_error: f64,
    /// `max` over rows of the differences to the direct recomputation.
    pub recompute_error: f64,
}

/// Thresholds for `μ = μ₀ + μ⁻` with `ν = h = 1`, from the shift rule
/// `λ₁(μ₀ + μ⁻) = λ₁,₀ − μ⁻`, checked against fresh eigen-solves.
pub fn gap_report(mu0: &GridField, d: f64, mu_minus: &[f64]) -> Result<GapReport> {
    let opts = EigenOptions {
        residual_tol: 1e-10,
        ..EigenOptions::default()
    };
    let base = principal_eigenpair_with(mu0, d, &opts)?;
    let lam0 = base.lambda;
    let phi = base.phi_min;
    let ratio1 = phi / (1.0 + phi).powi(2);
    let base_gap = lam0 * lam0 / 4.0 - lam0 * lam0 * ratio1;
    let b = mu0.max();
    let rows = mu_minus
        .par_iter()
        .map(|&m| -> Result<GapRow> {
            if m <= lam0 {
                return contract(format!("mu_minus = {m} must exceed lambda1_0 = {lam0:e}"));
            }
            let lambda1 = lam0 - m;
            let delta1 = lambda1 * lambda1 * ratio1;
            let delta2 = lambda1 * lambda1 / 4.0;
            let direct = principal_eigenpair_with(&mu0.map(|v| v + m), d, &opts)?;
            let dl = direct.lambda;
            let dp = direct.phi_min;
            Ok(GapRow {
                mu_minus: m,
                mu_plus: b + m,
                lambda1,
                delta1,
                delta2,
                gap: delta2 - delta1,
                gap_identity: (1.0 - m / lam0).powi(2) * base_gap,
                relative_gap: (delta2 - delta1) / delta1,
                lambda1_direct: dl,
                delta1_direct: dl * dl * dp / (1.0 + dp).powi(2),
                delta2_direct: dl * dl / 4.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let identity_error = rows
        .iter()
        .map(|r| (r.gap - r.gap_identity).abs())
        .fold(0.0, f64::max);
    let recompute_error = rows
        .iter()
        .map(|r| {
            (r.lambda1 - r.lambda1_direct)
                .abs()
                .max((r.delta1 - r.delta1_direct).abs())
                .max((r.delta2 - r.delta2_direct).abs())
        })
        .fold(0.0, f64::max);
    Ok(GapReport {
        lambda1_base: lam0,
        phi_min_base: phi,
        rows,
        identity_error,
        recompute_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_are_even_and_spread() {
        let t = STargets::Range { lo: 3400, hi: 4900 };
        assert_eq!(t.target(0, 4), 3400);
        assert_eq!(t.target(3, 4), 4900);
        assert!((0..4).all(|i| t.target(i, 4) % 2 == 0));
        assert_eq!(STargets::List(vec![10, 20]).target(3, 9), 20);
    }

    #[test]
    fn legendre_values() {
        let p = legendre(0.5, 3);
        assert!((p[2] - (3.0 * 0.25 - 1.0) / 2.0).abs() < 1e-15);
        assert!((p[3] - (5.0 * 0.125 - 1.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn exact_quadratic_is_reproduced() {
        let x: Vec<f64> = (0..40).map(|i| 3000.0 + 50.0 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1e-6 * v * v - 2e-3 * v + 1.0).collect();
        let fit = PolyFit::fit(&x, &y, 9, 0.99).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((fit.predict(*a) - b).abs() < 1e-8);
        }
        assert!(fit.sigma < 1e-8);
    }

    #[test]
    fn too_few_points_rejected() {
        let x = [1.0, 2.0, 3.0];
        assert!(PolyFit::fit(&x, &x, 2, 0.99).is_err());
    }
}
