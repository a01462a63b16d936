//! Stationary states of the harvested logistic equation
//!
//! ```text
//! −D∇²p = p(μ − νp) − δ h ρ_ε(p)
//! ```
//!
//! built by monotone sub/supersolution iteration, their classification, the
//! closed-form yield thresholds `δ₁ ≤ δ* ≤ δ₂`, and a Newton-based census of
//! significant solutions.

use std::sync::{Arc, OnceLock};

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::evolution;
use crate::grid::{laplacian_into, Boundary, DomainSpec, GridField};
use crate::linalg::{min_max, ShiftedOperator, SpectralSolver};
use crate::spectral::{principal_eigenpair, second_eigenvalue_given, EigenPair};

/// Shape of the C¹ taper `ρ_ε` from 0 (at `s ≤ 0`) to 1 (at `s ≥ ε`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoShape {
    /// `3t² − 2t³` with `t = s/ε`.
    #[default]
    Cubic,
    /// `6t⁵ − 15t⁴ + 10t³`, which is also C² at both ends.
    Quintic,
}

impl RhoShape {
    pub fn value(self, s: f64, eps: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s >= eps {
            return 1.0;
        }
        let t = s / eps;
        match self {
            RhoShape::Cubic => t * t * (3.0 - 2.0 * t),
            RhoShape::Quintic => t * t * t * (t * (6.0 * t - 15.0) + 10.0),
        }
    }

    pub fn derivative(self, s: f64, eps: f64) -> f64 {
        if s <= 0.0 || s >= eps {
            return 0.0;
        }
        let t = s / eps;
        match self {
            RhoShape::Cubic => 6.0 * t * (1.0 - t) / eps,
            RhoShape::Quintic => 30.0 * t * t * (1.0 - t) * (1.0 - t) / eps,
        }
    }

    /// `max ρ′_ε`.
    pub fn max_slope(self, eps: f64) -> f64 {
        match self {
            RhoShape::Cubic => 1.5 / eps,
            RhoShape::Quintic => 1.875 / eps,
        }
    }
}

/// The cubic smoothstep taper.
pub fn rho_eps(s: f64, eps: f64) -> f64 {
    RhoShape::Cubic.value(s, eps)
}

/// Coefficients of the harvested model together with the principal
/// eigenpair of `−D∇² − μ`, which every threshold depends on.
#[derive(Clone, Debug)]
pub struct ModelParams {
    d: f64,
    mu: GridField,
    nu: GridField,
    h: GridField,
    delta: f64,
    epsilon: f64,
    rho: RhoShape,
    nu_lo: f64,
    nu_hi: f64,
    alpha: f64,
    eig: Arc<EigenPair>,
    p0: Arc<OnceLock<GridField>>,
}

impl ModelParams {
    /// Validates the coefficients and computes `(λ₁, φ)`. With `epsilon =
    /// None` the default `10⁻³·(−λ₁φ̲/ν̄)` is used.
    pub fn new(
        d: f64,
        mu: GridField,
        nu: GridField,
        h: GridField,
        delta: f64,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return contract(format!("diffusion coefficient must be positive, got {d}"));
        }
        mu.check_same(&nu)?;
        mu.check_same(&h)?;
        let (nu_lo, nu_hi) = min_max(nu.values());
        if nu_lo <= 0.0 {
            return contract(format!(
                "crowding coefficient must be positive, min is {nu_lo}"
            ));
        }
        let (alpha, h_hi) = min_max(h.values());
        if alpha <= 0.0 || h_hi > 1.0 + 1e-12 {
            return contract(format!(
                "harvest profile must satisfy 0 < h ≤ 1, got range [{alpha}, {h_hi}]"
            ));
        }
        let eig = principal_eigenpair(&mu, d)?;
        let mut params = Self {
            d,
            mu,
            nu,
            h,
            delta: 0.0,
            epsilon: 1.0,
            rho: RhoShape::Cubic,
            nu_lo,
            nu_hi,
            alpha,
            eig: Arc::new(eig),
            p0: Arc::new(OnceLock::new()),
        };
        params.epsilon = epsilon.unwrap_or_else(|| params.default_epsilon());
        params.check_epsilon()?;
        params.set_delta(delta)?;
        Ok(params)
    }

    /// Spatially constant `μ`, `ν`, `h` on `domain`.
    pub fn homogeneous(
        domain: DomainSpec,
        d: f64,
        mu: f64,
        nu: f64,
        h: f64,
        delta: f64,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        Self::new(
            d,
            GridField::constant(domain, mu),
            GridField::constant(domain, nu),
            GridField::constant(domain, h),
            delta,
            epsilon,
        )
    }

    pub fn with_rho(mut self, rho: RhoShape) -> Self {
        self.rho = rho;
        self
    }

    /// Same model at another harvesting amplitude; the eigenpair and `p₀`
    /// are shared.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let mut p = self.clone();
        p.set_delta(delta)?;
        Ok(p)
    }

    fn set_delta(&mut self, delta: f64) -> Result<()> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return contract(format!(
                "harvesting amplitude must be nonnegative, got {delta}"
            ));
        }
        if delta > 0.0 && self.domain().boundary() == Boundary::Dirichlet {
            return contract(
                "the harvested model is only supported with periodic or Neumann boundaries",
            );
        }
        self.delta = delta;
        Ok(())
    }

    fn default_epsilon(&self) -> f64 {
        let scale = -self.eig.lambda * self.eig.phi_min / self.nu_hi;
        if scale > 0.0 {
            1e-3 * scale
        } else {
            1e-3
        }
    }

    fn check_epsilon(&self) -> Result<()> {
        let eps = self.epsilon;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {eps}"
            )));
        }
        let lambda = self.eig.lambda;
        if lambda < 0.0 && self.domain().boundary() != Boundary::Dirichlet {
            let bound = -lambda * self.eig.phi_min / (4.0 * self.nu_hi);
            if self.epsilon0() >= bound {
                return Err(Error::Config(format!(
                    "epsilon0 = {:e} violates epsilon0 < -lambda1*phi_min/(4*nu_hi) = {bound:e}",
                    self.epsilon0()
                )));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> &DomainSpec {
        self.mu.domain()
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn mu(&self) -> &GridField {
        &self.mu
    }

    pub fn nu(&self) -> &GridField {
        &self.nu
    }

    pub fn h(&self) -> &GridField {
        &self.h
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn rho(&self) -> RhoShape {
        self.rho
    }

    /// `ν̲ = min ν`.
    pub fn nu_lo(&self) -> f64 {
        self.nu_lo
    }

    /// `ν̄ = max ν`.
    pub fn nu_hi(&self) -> f64 {
        self.nu_hi
    }

    /// `α = min h`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eigenpair(&self) -> &EigenPair {
        &self.eig
    }

    pub fn lambda1(&self) -> f64 {
        self.eig.lambda
    }

    /// `ε₀ = ε/φ̲`.
    pub fn epsilon0(&self) -> f64 {
        self.epsilon / self.eig.phi_min
    }

    /// `f(p) = p(μ − νp) − δhρ_ε(p)` pointwise, with harvesting amplitude `delta`.
    pub(crate) fn reaction_into(&self, delta: f64, p: &[f64], out: &mut [f64]) {
        let (mu, nu, h) = (self.mu.values(), self.nu.values(), self.h.values());
        for k in 0..p.len() {
            let u = p[k];
            out[k] = u * (mu[k] - nu[k] * u) - delta * h[k] * self.rho.value(u, self.epsilon);
        }
    }

    /// `∂f/∂p` pointwise.
    pub(crate) fn reaction_slope_into(&self, delta: f64, p: &[f64], out: &mut [f64]) {
        let (mu, nu, h) = (self.mu.values(), self.nu.values(), self.h.values());
        for k in 0..p.len() {
            let u = p[k];
            out[k] = mu[k] - 2.0 * nu[k] * u - delta * h[k] * self.rho.derivative(u, self.epsilon);
        }
    }

    /// Upper bound on `−∂f/∂p` over `0 ≤ p ≤ bound`, with or without the
    /// contribution of the taper.
    pub(crate) fn slope_bound(&self, delta: f64, bound: f64, taper: bool) -> f64 {
        let (lo, hi) = min_max(self.mu.values());
        let mut k = lo.abs().max(hi.abs()) + 2.0 * self.nu_hi * bound.max(0.0);
        if taper && delta > 0.0 {
            k += delta * self.h.max() * self.rho.max_slope(self.epsilon);
        }
        k
    }

    fn residual_into(&self, delta: f64, p: &[f64], out: &mut [f64]) {
        let mut f = vec![0.0; p.len()];
        laplacian_into(self.domain(), self.d, p, out);
        self.reaction_into(delta, p, &mut f);
        for (o, fi) in out.iter_mut().zip(&f) {
            *o += fi;
        }
    }

    /// `D∇²p + p(μ − νp) − δhρ_ε(p)`.
    pub fn stationary_residual(&self, p: &GridField) -> Result<GridField> {
        p.check_same(&self.mu)?;
        let mut out = vec![0.0; p.len()];
        self.residual_into(self.delta, p.values(), &mut out);
        GridField::new(*p.domain(), out)
    }

    /// Weighted discrete L² norm of the stationary residual.
    pub(crate) fn residual_norm(&self, delta: f64, p: &[f64]) -> f64 {
        let mut out = vec![0.0; p.len()];
        self.residual_into(delta, p, &mut out);
        weighted_norm(self.domain(), &out)
    }

    /// The unharvested steady state `p₀`, computed once and shared by all
    /// clones of these parameters.
    pub fn logistic_profile(&self) -> Result<&GridField> {
        if let Some(p) = self.p0.get() {
            return Ok(p);
        }
        let p = solve_logistic_steady(self)?.p;
        let _ = self.p0.set(p);
        Ok(self.p0.get().expect("just set"))
    }
}

pub(crate) fn weighted_norm(domain: &DomainSpec, v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * domain.cell_volume()).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// `min p ≥ ε₀`.
    Significant,
    /// `max p < ε₀`.
    Remnant,
    Intermediate,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::Significant => "significant",
            Classification::Remnant => "remnant",
            Classification::Intermediate => "intermediate",
        })
    }
}

pub fn classify(p: &GridField, epsilon0: f64) -> Result<Classification> {
    let (lo, hi) = min_max(p.values());
    if lo < -1e-10 {
        return contract(format!(
            "cannot classify a field with negative values (min {lo:e})"
        ));
    }
    Ok(if lo >= epsilon0 {
        Classification::Significant
    } else if hi < epsilon0 {
        Classification::Remnant
    } else {
        Classification::Intermediate
    })
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub p: GridField,
    pub classification: Classification,
    pub epsilon0: f64,
    /// Weighted L² norm of the stationary residual.
    pub residual: f64,
    pub iterations: usize,
}

impl SteadyState {
    pub(crate) fn from_values(
        params: &ModelParams,
        delta: f64,
        p: Vec<f64>,
        iterations: usize,
    ) -> Result<Self> {
        let residual = params.residual_norm(delta, &p);
        let p = GridField::new(*params.domain(), p)?;
        let epsilon0 = params.epsilon0();
        Ok(Self {
            classification: classify(&p, epsilon0)?,
            p,
            epsilon0,
            residual,
            iterations,
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SteadyOptions {
    /// Stop once successive iterates differ by less than this in sup norm.
    pub step_tol: f64,
    /// ... and the residual is below this.
    pub residual_tol: f64,
    pub max_iterations: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            step_tol: 1e-10,
            residual_tol: 1e-8,
            max_iterations: 2_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Direction {
    Decreasing,
    Increasing,
}

/// The order-preserving fixed-point map `p ↦ (K − D∇²)⁻¹(Kp + f(p))`.
pub(crate) struct MonotoneMap<'a> {
    params: &'a ModelParams,
    delta: f64,
    solver: SpectralSolver,
    k_base: f64,
    k_full: f64,
    rhs: Vec<f64>,
}

impl<'a> MonotoneMap<'a> {
    /// `bound` is an upper bound on every iterate.
    pub(crate) fn new(params: &'a ModelParams, delta: f64, bound: f64) -> Self {
        let k_base = params.slope_bound(delta, bound, false).max(1.0);
        let k_full = params.slope_bound(delta, bound, true).max(1.0);
        Self {
            params,
            delta,
            solver: SpectralSolver::new(params.domain()),
            k_base,
            k_full,
            rhs: vec![0.0; params.domain().len()],
        }
    }

    fn apply(&mut self, p: &[f64], k: f64, out: &mut [f64]) {
        self.params.reaction_into(self.delta, p, &mut self.rhs);
        for (r, &pi) in self.rhs.iter_mut().zip(p) {
            *r += k * pi;
        }
        self.solver.solve_into(k, self.params.d, &self.rhs, out);
    }

    /// The taper only matters where a value lies below `ε`; away from it the
    /// smaller constant keeps the iteration fast.
    fn needs_taper(&self, v: &[f64]) -> bool {
        self.delta > 0.0 && v.iter().any(|&x| x < 2.0 * self.params.epsilon)
    }

    /// One step; with a direction the ordering is asserted and enforced.
    pub(crate) fn step(
        &mut self,
        p: &[f64],
        out: &mut [f64],
        dir: Option<Direction>,
    ) -> Result<()> {
        let slack = 1e-12 * p.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut full = self.needs_taper(p);
        loop {
            let k = if full { self.k_full } else { self.k_base };
            self.apply(p, k, out);
            if !full && self.needs_taper(out) {
                full = true;
                continue;
            }
            let violation = match dir {
                None => 0.0,
                Some(Direction::Decreasing) => {
                    out.iter().zip(p).fold(0.0f64, |m, (a, b)| m.max(a - b))
                }
                Some(Direction::Increasing) => {
                    out.iter().zip(p).fold(0.0f64, |m, (a, b)| m.max(b - a))
                }
            };
            if violation > slack {
                if !full {
                    full = true;
                    continue;
                }
                return Err(Error::Numerical(format!(
                    "monotone iteration lost its ordering by {violation:e}; stiffness constant {k} too small"
                )));
            }
            break;
        }
        match dir {
            Some(Direction::Decreasing) => out.iter_mut().zip(p).for_each(|(a, &b)| *a = a.min(b)),
            Some(Direction::Increasing) => out.iter_mut().zip(p).for_each(|(a, &b)| *a = a.max(b)),
            None => {}
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "monotone iteration produced a non-finite value".into(),
            ));
        }
        Ok(())
    }
}

/// Runs the monotone iteration from `start` until the step and residual
/// tolerances hold.
pub(crate) fn monotone_iterate(
    params: &ModelParams,
    delta: f64,
    start: Vec<f64>,
    bound: f64,
    dir: Direction,
    opts: &SteadyOptions,
) -> Result<SteadyState> {
    let mut map = MonotoneMap::new(params, delta, bound);
    let mut p = start;
    let mut next = vec![0.0; p.len()];
    let mut diff = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        map.step(&p, &mut next, Some(dir))?;
        diff = next
            .iter()
            .zip(&p)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut p, &mut next);
        if diff < opts.step_tol {
            let state = SteadyState::from_values(params, delta, p.clone(), it)?;
            if state.residual <= opts.residual_tol {
                debug!(
                    "monotone iteration converged in {it} steps (residual {:e})",
                    state.residual
                );
                return Ok(state);
            }
        }
    }
    Err(Error::NoConvergence {
        what: "monotone iteration",
        iterations: opts.max_iterations,
        residual: diff,
    })
}

/// The unharvested steady state `p₀`; the harvesting amplitude is ignored.
/// Zero (remnant) when `λ₁ ≥ 0`.
pub fn solve_logistic_steady(params: &ModelParams) -> Result<SteadyState> {
    solve_logistic_steady_with(params, &SteadyOptions::default())
}

pub fn solve_logistic_steady_with(
    params: &ModelParams,
    opts: &SteadyOptions,
) -> Result<SteadyState> {
    if params.lambda1() >= 0.0 {
        return SteadyState::from_values(params, 0.0, vec![0.0; params.domain().len()], 0);
    }
    let m = params.mu.max() / params.nu_lo + 1.0;
    let start = vec![m; params.domain().len()];
    monotone_iterate(params, 0.0, start, m, Direction::Decreasing, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Decreasing iteration from `p₀`: the maximal solution below `p₀`.
    MaximalFromAbove,
    /// Increasing iteration from `κ₀φ`, available for `δ ≤ δ₁`.
    MinimalSignificant,
}

pub fn solve_harvested_steady(params: &ModelParams, branch: Branch) -> Result<SteadyState> {
    solve_harvested_steady_with(params, branch, &SteadyOptions::default())
}

pub fn solve_harvested_steady_with(
    params: &ModelParams,
    branch: Branch,
    opts: &SteadyOptions,
) -> Result<SteadyState> {
    if params.lambda1() >= 0.0 {
        return contract(format!(
            "harvested steady states need lambda1 < 0, got {:e}",
            params.lambda1()
        ));
    }
    let p0 = params.logistic_profile()?;
    let bound = p0.max();
    match branch {
        Branch::MaximalFromAbove => monotone_iterate(
            params,
            params.delta,
            p0.values().to_vec(),
            bound,
            Direction::Decreasing,
            opts,
        ),
        Branch::MinimalSignificant => {
            let t = thresholds(params, params.eigenpair())?;
            if params.delta > t.delta1 {
                return contract(format!(
                    "kappa0*phi is only a subsolution for delta <= delta1 = {:e}, got {:e}",
                    t.delta1, params.delta
                ));
            }
            let start: Vec<f64> = params
                .eig
                .phi
                .values()
                .iter()
                .map(|v| kappa0(params) * v)
                .collect();
            monotone_iterate(
                params,
                params.delta,
                start,
                bound,
                Direction::Increasing,
                opts,
            )
        }
    }
}

/// `κ₀ = −λ₁/(ν̄(1 + φ̲))`.
pub fn kappa0(params: &ModelParams) -> f64 {
    -params.lambda1() / (params.nu_hi * (1.0 + params.eig.phi_min))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub delta1: f64,
    pub delta2: f64,
    pub delta_star_bracket: Option<(f64, f64)>,
}

/// `δ₁ = λ₁²φ̲/(ν̄(1+φ̲)²)` and `δ₂ = λ₁²/(4αν̲)`.
pub fn thresholds(params: &ModelParams, eig: &EigenPair) -> Result<Thresholds> {
    let lambda = eig.lambda;
    if lambda >= 0.0 {
        return contract(format!(
            "no positive steady state exists for lambda1 = {lambda:e} >= 0"
        ));
    }
    let phi = eig.phi_min;
    let delta1 = lambda * lambda * phi / (params.nu_hi * (1.0 + phi).powi(2));
    let delta2 = lambda * lambda / (4.0 * params.alpha * params.nu_lo);
    debug_assert!(delta1 <= delta2 * (1.0 + 1e-12));
    Ok(Thresholds {
        delta1,
        delta2,
        delta_star_bracket: None,
    })
}

/// Bisection on `δ` for the largest yield whose long-time limit from `p₀`
/// is significant. The returned bracket `[lo, hi]` has `lo` significant,
/// `hi` not, and `hi − lo ≤ tol`.
pub fn locate_delta_star(params: &ModelParams, tol: f64) -> Result<Thresholds> {
    if !(tol > 0.0) {
        return contract(format!("bisection tolerance must be positive, got {tol}"));
    }
    let mut t = thresholds(params, params.eigenpair())?;
    let significant = |delta: f64| -> Result<bool> {
        let p = params.with_delta(delta)?;
        evolution::significant_from_p0(&p)
    };
    let mut lo = t.delta1;
    if !significant(lo)? {
        return Err(Error::Consistency(format!(
            "limit from p0 at delta1 = {lo:e} is not significant (lambda1 = {:e}, phi_min = {:e})",
            params.lambda1(),
            params.eig.phi_min
        )));
    }
    let mut hi = t.delta2 + 0.5 * tol;
    if significant(hi)? {
        return Err(Error::Consistency(format!(
            "limit from p0 above delta2 (at {hi:e}) is still significant"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if significant(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        debug!("delta* bracket [{lo:e}, {hi:e}]");
    }
    t.delta_star_bracket = Some((lo, hi));
    Ok(t)
}

/// Distinct significant steady states found by Newton polishing from random
/// and canonical starting fields.
#[derive(Clone, Debug)]
pub struct Multiplicity {
    pub count: usize,
    /// True when every pair of distinct solutions is strictly ordered.
    pub ordered: bool,
    pub solutions: Vec<GridField>,
    pub lambda2: f64,
    /// `λ₁ < 0 ≤ λ₂`, the regime in which at most two are expected.
    pub guarantee_applies: bool,
    /// Probes whose Newton iteration failed.
    pub dropped: usize,
}

const CLUSTER_TOL: f64 = 1e-6;

pub fn count_significant_solutions(
    params: &ModelParams,
    probe_count: usize,
    seed: u64,
) -> Result<Multiplicity> {
    let lambda2 = second_eigenvalue_given(params.mu(), params.d, params.eigenpair())?;
    let guarantee_applies = params.lambda1() < 0.0 && lambda2 >= 0.0;
    if !guarantee_applies {
        warn!(
            "lambda1 = {:e}, lambda2 = {lambda2:e}: no multiplicity bound applies",
            params.lambda1()
        );
    }
    if params.lambda1() >= 0.0 {
        return Ok(Multiplicity {
            count: 0,
            ordered: true,
            solutions: Vec::new(),
            lambda2,
            guarantee_applies,
            dropped: 0,
        });
    }
    let eps0 = params.epsilon0();
    let p0 = params.logistic_profile()?.clone();
    let top = p0.max();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<(f64, u64)> = (0..probe_count)
        .map(|_| (rng.random_range(eps0..top), rng.random()))
        .collect();
    let n = params.domain().len();
    let results: Vec<Option<Vec<f64>>> = probes
        .par_iter()
        .map(|&(c, s)| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let start: Vec<f64> = (0..n)
                .map(|_| c * (1.0 + 0.1 * r.random_range(-1.0..1.0)))
                .collect();
            newton_solve(params, start).ok()
        })
        .collect();
    let dropped = results.iter().filter(|r| r.is_none()).count();
    let mut found: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    found.push(
        solve_harvested_steady(params, Branch::MaximalFromAbove)?
            .p
            .into_values(),
    );
    let t = thresholds(params, params.eigenpair())?;
    if params.delta <= t.delta1 {
        found.push(
            solve_harvested_steady(params, Branch::MinimalSignificant)?
                .p
                .into_values(),
        );
    }
    found.retain(|p| p.iter().all(|&v| v >= eps0));
    found.sort_by(|a, b| {
        let ma: f64 = a.iter().sum();
        let mb: f64 = b.iter().sum();
        ma.total_cmp(&mb)
    });
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    for p in found {
        let close = distinct
            .iter()
            .any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= CLUSTER_TOL));
        if !close {
            distinct.push(p);
        }
    }
    let mut ordered = true;
    for i in 0..distinct.len() {
        for j in i + 1..distinct.len() {
            let (a, b) = (&distinct[i], &distinct[j]);
            let below = a.iter().zip(b).all(|(x, y)| x < y);
            let above = a.iter().zip(b).all(|(x, y)| x > y);
            ordered &= below || above;
        }
    }
    let domain = *params.domain();
    let solutions = distinct
        .into_iter()
        .map(|v| GridField::new(domain, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(Multiplicity {
        count: solutions.len(),
        ordered,
        solutions,
        lambda2,
        guarantee_applies,
        dropped,
    })
}

/// Damped Newton on the stationary residual; the symmetric, possibly
/// indefinite Jacobian systems are solved by MINRES.
pub(crate) fn newton_solve(params: &ModelParams, start: Vec<f64>) -> Result<Vec<f64>> {
    let delta = params.delta;
    let n = start.len();
    let mut u = start;
    let mut f = vec![0.0; n];
    let mut slope = vec![0.0; n];
    params.residual_into(delta, &u, &mut f);
    let mut fnorm = weighted_norm(params.domain(), &f);
    let solver = SpectralSolver::new(params.domain());
    for _ in 0..60 {
        if fnorm <= 1e-11 {
            return Ok(u);
        }
        params.reaction_slope_into(delta, &u, &mut slope);
        slope.iter_mut().for_each(|s| *s = -*s);
        let op = ShiftedOperator::with_solver(solver.clone(), params.d, 0.0, Some(&slope));
        let step = op.solve_indefinite(&f, 1e-12)?;
        let mut t = 1.0;
        let mut trial = vec![0.0; n];
        let mut tf = vec![0.0; n];
        loop {
            for k in 0..n {
                trial[k] = u[k] + t * step[k];
            }
            params.residual_into(delta, &trial, &mut tf);
            let tn = weighted_norm(params.domain(), &tf);
            if tn < (1.0 - 1e-4 * t) * fnorm {
                std::mem::swap(&mut u, &mut trial);
                std::mem::swap(&mut f, &mut tf);
                fnorm = tn;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                let step_sup = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if fnorm <= 1e-9 && step_sup <= 1e-9 {
                    return Ok(u);
                }
                return Err(Error::Numerical(format!(
                    "Newton line search stalled at residual {fnorm:e}"
                )));
            }
        }
    }
    if fnorm <= 1e-9 {
        return Ok(u);
    }
    Err(Error::NoConvergence {
        what: "Newton iteration",
        iterations: 60,
        residual: fnorm,
    })
}
