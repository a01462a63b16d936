//! Time integration of
//!
//! ```text
//! u_t = D∇²u + u(μ − νu) − δ h ρ_ε(u)
//! ```
//!
//! by a first-order IMEX scheme: diffusion implicit, reaction and harvest
//! explicit. With the step restricted by the explicit stability bound the
//! scheme is order-preserving, so a trajectory started at `p₀` is
//! nonincreasing in time, which the long-time classification exploits.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::grid::GridField;
use crate::linalg::{min_max, SpectralSolver};
use crate::steady::{Classification, ModelParams, MonotoneMap, SteadyState};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveOptions {
    /// Converged once `‖u(t+dt) − u(t)‖∞ / dt` drops below this.
    pub rate_tol: f64,
    /// Longest integration time for the long-time classification.
    pub t_cap: f64,
    /// Monotone-iteration steps applied to the last snapshot.
    pub polish_steps: usize,
    /// Largest step the integrator takes even when stability allows more.
    pub max_dt: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            rate_tol: 1e-9,
            t_cap: (1u64 << 20) as f64,
            polish_steps: 5,
            max_dt: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    ReachedEnd,
    /// The trajectory is nonincreasing and already lies below `ε₀`.
    BelowThreshold,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<GridField>,
    pub final_state: SteadyState,
    pub converged: bool,
    pub stop: StopReason,
    /// `max u` drop between consecutive snapshots.
    pub sup_norm_decrements: Vec<f64>,
    /// Largest pointwise increase over a single step; nonpositive (up to
    /// roundoff) for a trajectory started at `p₀`.
    pub max_increase: f64,
    pub steps: usize,
}

struct Integrator<'a> {
    params: &'a ModelParams,
    delta: f64,
    solver: SpectralSolver,
    u: Vec<f64>,
    t: f64,
    steps: usize,
    explicit: Vec<f64>,
    next: Vec<f64>,
    max_increase: f64,
    warned: bool,
}

impl<'a> Integrator<'a> {
    fn new(params: &'a ModelParams, u0: Vec<f64>) -> Self {
        let n = u0.len();
        Self {
            params,
            delta: params.delta(),
            solver: SpectralSolver::new(params.domain()),
            u: u0,
            t: 0.0,
            steps: 0,
            explicit: vec![0.0; n],
            next: vec![0.0; n],
            max_increase: f64::NEG_INFINITY,
            warned: false,
        }
    }

    fn needs_taper(&self, v: &[f64]) -> bool {
        self.delta > 0.0 && v.iter().any(|&x| x < 2.0 * self.params.epsilon())
    }

    fn stable_dt(&self, taper: bool) -> f64 {
        let (_, hi) = min_max(&self.u);
        0.5 / self.params.slope_bound(self.delta, hi, taper).max(1e-300)
    }

    fn explicit_into(&mut self, dt: f64) {
        self.params
            .reaction_into(self.delta, &self.u, &mut self.explicit);
        for (e, &u) in self.explicit.iter_mut().zip(&self.u) {
            *e = u + dt * *e;
        }
    }

    /// Advances by at most `dt_req`; returns `(dt, ‖Δu‖∞/dt)`.
    fn step(&mut self, dt_req: f64) -> Result<(f64, f64)> {
        let mut taper = self.needs_taper(&self.u);
        let mut dt = dt_req.min(self.stable_dt(taper));
        self.explicit_into(dt);
        if !taper && self.needs_taper(&self.explicit) {
            taper = true;
            dt = dt_req.min(self.stable_dt(taper));
            self.explicit_into(dt);
        }
        if dt < dt_req && !self.warned && dt_req.is_finite() {
            debug!("time step {dt_req:e} exceeds the explicit stability bound; using {dt:e}");
            self.warned = true;
        }
        let c = 1.0 / dt;
        self.explicit.iter_mut().for_each(|e| *e *= c);
        self.solver
            .solve_into(c, self.params.d(), &self.explicit, &mut self.next);
        let mut lo = f64::INFINITY;
        let mut change = 0.0f64;
        let mut increase = f64::NEG_INFINITY;
        for (&a, &b) in self.next.iter().zip(&self.u) {
            if !a.is_finite() {
                return Err(Error::Numerical(format!(
                    "solution blew up at t = {:e}",
                    self.t
                )));
            }
            lo = lo.min(a);
            change = change.max((a - b).abs());
            increase = increase.max(a - b);
        }
        if lo < -1e-10 {
            return Err(Error::Numerical(format!(
                "solution became negative ({lo:e}) at t = {:e}",
                self.t
            )));
        }
        self.max_increase = self.max_increase.max(increase);
        std::mem::swap(&mut self.u, &mut self.next);
        self.t += dt;
        self.steps += 1;
        Ok((dt, change / dt))
    }

    fn polished(&self, steps: usize) -> Result<SteadyState> {
        let hi = self.u.iter().fold(0.0f64, |m, &v| m.max(v));
        let mut map = MonotoneMap::new(self.params, self.delta, hi);
        let mut p = self.u.clone();
        let mut q = vec![0.0; p.len()];
        for _ in 0..steps {
            map.step(&p, &mut q, None)?;
            q.iter_mut().for_each(|v| *v = v.max(0.0));
            std::mem::swap(&mut p, &mut q);
        }
        SteadyState::from_values(self.params, self.delta, p, self.steps)
    }
}

fn check_initial(params: &ModelParams, u0: &GridField) -> Result<()> {
    u0.check_same(params.mu())?;
    if u0.min() < 0.0 {
        return contract(format!(
            "initial datum must be nonnegative (min {:e})",
            u0.min()
        ));
    }
    Ok(())
}

/// Integrates from `u0` up to `t_end` with steps of at most `dt` (shrunk to
/// the explicit stability bound when needed), stopping early once the
/// solution is stationary.
pub fn integrate(params: &ModelParams, u0: &GridField, t_end: f64, dt: f64) -> Result<Trajectory> {
    integrate_with(params, u0, t_end, dt, &EvolveOptions::default())
}

pub fn integrate_with(
    params: &ModelParams,
    u0: &GridField,
    t_end: f64,
    dt: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    check_initial(params, u0)?;
    if !(t_end > 0.0 && dt > 0.0) {
        return contract(format!(
            "t_end and dt must be positive, got {t_end} and {dt}"
        ));
    }
    let domain = *params.domain();
    let mut it = Integrator::new(params, u0.values().to_vec());
    let mut times = vec![0.0];
    let mut snapshots = vec![u0.clone()];
    let mut next_sample = 1.0f64.min(t_end);
    let mut converged = false;
    while it.t < t_end {
        let (_, rate) = it.step(dt.min(t_end - it.t).min(opts.max_dt))?;
        if rate < opts.rate_tol {
            converged = true;
        }
        if converged || it.t >= next_sample * (1.0 - 1e-12) || it.t >= t_end {
            times.push(it.t);
            snapshots.push(GridField::new(domain, it.u.clone())?);
            while next_sample <= it.t {
                next_sample *= 2.0;
            }
        }
        if converged {
            break;
        }
    }
    let sup_norm_decrements = snapshots
        .windows(2)
        .map(|w| w[0].max() - w[1].max())
        .collect();
    let final_state = it.polished(opts.polish_steps)?;
    Ok(Trajectory {
        times,
        snapshots,
        final_state,
        converged,
        stop: if converged {
            StopReason::Converged
        } else {
            StopReason::ReachedEnd
        },
        sup_norm_decrements,
        max_increase: it.max_increase,
        steps: it.steps,
    })
}

/// Long-time limit of the flow started at `p₀`, integrating over doubling
/// horizons up to `t_cap`.
pub fn classify_longtime(params: &ModelParams) -> Result<(Classification, SteadyState)> {
    let (c, state, _) = classify_longtime_with(params, &EvolveOptions::default())?;
    Ok((c, state))
}

/// As [`classify_longtime`], also reporting the largest pointwise increase
/// seen along the way.
pub fn classify_longtime_with(
    params: &ModelParams,
    opts: &EvolveOptions,
) -> Result<(Classification, SteadyState, f64)> {
    if params.lambda1() >= 0.0 {
        return contract(format!(
            "long-time classification needs lambda1 < 0, got {:e}",
            params.lambda1()
        ));
    }
    let p0 = params.logistic_profile()?;
    let eps0 = params.epsilon0();
    let mut it = Integrator::new(params, p0.values().to_vec());
    let mut horizon = 1.0;
    loop {
        while it.t < horizon {
            let (_, rate) = it.step(opts.max_dt)?;
            let (_, hi) = min_max(&it.u);
            if hi < eps0 {
                let state = it.polished(opts.polish_steps)?;
                debug!("remnant certified at t = {:e}", it.t);
                return Ok((Classification::Remnant, state, it.max_increase));
            }
            if rate < opts.rate_tol {
                let state = it.polished(opts.polish_steps)?;
                debug!("converged at t = {:e} after {} steps", it.t, it.steps);
                return Ok((state.classification, state, it.max_increase));
            }
        }
        horizon *= 2.0;
        if horizon > opts.t_cap {
            return Err(Error::Undecided { t_end: it.t });
        }
    }
}

/// Decides whether the limit from `p₀` is significant without waiting for
/// convergence when a certificate is available: the flow never increases,
/// so `min u(t) < ε₀` rules significance out, while a subsolution `κφ ≤ u(t)`
/// with `κφ̲ ≥ ε₀` guarantees it.
pub(crate) fn significant_from_p0(params: &ModelParams) -> Result<bool> {
    if params.lambda1() >= 0.0 {
        return Ok(false);
    }
    let opts = EvolveOptions::default();
    let p0 = params.logistic_profile()?;
    let eps0 = params.epsilon0();
    let cert = SubsolutionTest::new(params);
    let mut it = Integrator::new(params, p0.values().to_vec());
    if cert.holds(&it.u) {
        return Ok(true);
    }
    loop {
        let (_, rate) = it.step(opts.max_dt)?;
        let (lo, _) = min_max(&it.u);
        if lo < eps0 {
            return Ok(false);
        }
        if it.steps % 25 == 0 && cert.holds(&it.u) {
            debug!("significance certified at t = {:e}", it.t);
            return Ok(true);
        }
        if rate < opts.rate_tol {
            let state = it.polished(opts.polish_steps)?;
            return Ok(state.classification == Classification::Significant);
        }
        if it.t > opts.t_cap {
            return Err(Error::Undecided { t_end: it.t });
        }
    }
}

/// Pointwise test of `−D∇²(κφ) − κφ(μ − νκφ) + δh ≤ 0` for `κ` between
/// `ε₀/φ̲` and the largest `κ` with `κφ ≤ u`.
struct SubsolutionTest<'a> {
    params: &'a ModelParams,
    /// `D∇²φ + μφ`, which is `−λ₁φ` up to solver tolerance.
    linear: Vec<f64>,
    tol: f64,
    /// `‖D∇²φ + μφ + λ₁φ‖∞`; the test is only as sharp as the eigenpair.
    eig_residual: f64,
}

impl<'a> SubsolutionTest<'a> {
    fn new(params: &'a ModelParams) -> Self {
        let phi = params.eigenpair().phi.values();
        let mut linear = vec![0.0; phi.len()];
        crate::grid::laplacian_into(params.domain(), params.d(), phi, &mut linear);
        for ((l, &p), &m) in linear.iter_mut().zip(phi).zip(params.mu().values()) {
            *l += m * p;
        }
        let lam = params.lambda1();
        let tol = 1e-12 * (1.0 + params.delta() + lam * lam / params.nu_lo());
        let eig_residual = linear
            .iter()
            .zip(phi)
            .fold(0.0f64, |m, (l, p)| m.max((l + lam * p).abs()));
        Self {
            params,
            linear,
            tol,
            eig_residual,
        }
    }

    fn holds_for(&self, kappa: f64) -> bool {
        let p = self.params;
        let phi = p.eigenpair().phi.values();
        let (nu, h) = (p.nu().values(), p.h().values());
        let tol = self.tol + kappa * self.eig_residual;
        (0..phi.len()).all(|k| {
            let t = kappa * phi[k];
            -kappa * self.linear[k] + nu[k] * t * t + p.delta() * h[k] <= tol
        })
    }

    fn holds(&self, u: &[f64]) -> bool {
        let p = self.params;
        let phi = p.eigenpair().phi.values();
        let top = u
            .iter()
            .zip(phi)
            .fold(f64::INFINITY, |m, (a, b)| m.min(a / b));
        let bottom = p.epsilon0() / p.eigenpair().phi_min;
        if !(top >= bottom) {
            return false;
        }
        let k0 = crate::steady::kappa0(p);
        if k0 >= bottom && k0 <= top && self.holds_for(k0) {
            return true;
        }
        (0..=16).any(|j| self.holds_for(bottom + (top - bottom) * j as f64 / 16.0))
    }
}

/// Proportional harvesting `u_t = D∇²u + u(μ − νu) − qu`, i.e. the
/// unharvested model with growth rate `τ = μ − q`.
pub fn integrate_proportional(
    d: f64,
    mu: &GridField,
    nu: &GridField,
    q: &GridField,
    u0: &GridField,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if q.min() < 0.0 {
        return contract(format!(
            "harvest rate must be nonnegative (min {:e})",
            q.min()
        ));
    }
    let tau = mu.zip_map(q, |m, r| m - r)?;
    let ones = GridField::constant(*mu.domain(), 1.0);
    let params = ModelParams::new(d, tau, nu.clone(), ones, 0.0, None)?;
    integrate(&params, u0, t_end, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainSpec;

    fn homogeneous(delta: f64) -> ModelParams {
        let dom = DomainSpec::periodic_2d(1.0, 1.0, 8, 8).unwrap();
        ModelParams::homogeneous(dom, 1.0, 1.0, 1.0, 1.0, delta, Some(1e-3)).unwrap()
    }

    #[test]
    fn stationary_datum_stays_put() {
        let p = homogeneous(0.0);
        let p0 = p.logistic_profile().unwrap().clone();
        let tr = integrate(&p, &p0, 10.0, 0.1).unwrap();
        assert!(tr.converged);
        assert!(tr.final_state.p.sup_distance(&p0) < 1e-9);
    }

    #[test]
    fn homogeneous_limits() {
        let p = homogeneous(0.2);
        let u0 = GridField::constant(*p.domain(), 1.0);
        let tr = integrate(&p, &u0, 1e4, 0.05).unwrap();
        let root = 0.5 * (1.0 + 0.2f64.sqrt());
        assert!(tr.converged);
        assert!((tr.final_state.p.max() - root).abs() < 1e-6);
        let (c, _) = classify_longtime(&homogeneous(0.3)).unwrap();
        assert_eq!(c, Classification::Remnant);
    }

    #[test]
    fn certificates_agree_with_the_flow() {
        assert!(significant_from_p0(&homogeneous(0.2)).unwrap());
        assert!(significant_from_p0(&homogeneous(0.25)).unwrap());
        assert!(!significant_from_p0(&homogeneous(0.2505)).unwrap());
    }

    #[test]
    fn proportional_reduces_to_logistic() {
        let dom = DomainSpec::periodic_1d(1.0, 16).unwrap();
        let c = |v| GridField::constant(dom, v);
        let tr = integrate_proportional(1.0, &c(2.0), &c(1.0), &c(1.0), &c(0.3), 1e4, 0.1).unwrap();
        assert!((tr.final_state.p.max() - 1.0).abs() < 1e-6);
        let tr =
            integrate_proportional(1.0, &c(2.0), &c(1.0), &c(3.0), &c(0.3), 200.0, 0.1).unwrap();
        assert!(tr.final_state.p.max() < 1e-6);
    }
}
