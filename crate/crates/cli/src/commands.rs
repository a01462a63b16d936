//! One function per subcommand. Each returns the JSON summary printed on
//! standard output and writes its files into the output directory.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use log::{info, warn};
use qcyield_core::evolution::{classify_longtime_with, integrate_with};
use qcyield_core::landscape::generate_with;
use qcyield_core::spectral::{principal_eigenpair_with, second_eigenvalue_given};
use qcyield_core::steady::{solve_harvested_steady_with, solve_logistic_steady_with};
use qcyield_core::study::{record_csv_line, write_records_csv};
use qcyield_core::{
    count_significant_solutions, fieldio, fit_polynomial, gap_report, lambda2_lower_bound,
    locate_delta_star, monotone_rearrange, principal_eigenpair, run_study, stats,
    steiner_rearrange, thresholds, to_growth_field, Branch, DomainSpec, Error, GridField,
    Landscape, ModelParams, StudyConfig,
};
use serde_json::{json, Value};

use crate::config::{
    BranchName, ExperimentConfig, FieldSource, FieldSpec, GeneratorSpec, InitialDatum,
    RearrangeKind,
};
use crate::output::{study_svg, OutDir};
use crate::CliError;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: OutDir,
    pub threads: Option<usize>,
}

impl Context {
    fn domain(&self) -> Result<DomainSpec, CliError> {
        let d = &self.cfg.domain;
        Ok(DomainSpec::new(d.boundary, &d.extents, &d.points)?)
    }

    fn field(&self, src: &FieldSource) -> Result<GridField, CliError> {
        let domain = self.domain()?;
        Ok(match src {
            FieldSource::Constant(c) => GridField::constant(domain, *c),
            FieldSource::Spec(FieldSpec::File { path }) => read_field(path, &domain)?,
            FieldSource::Spec(FieldSpec::Landscape {
                path,
                mu_plus,
                mu_minus,
            }) => {
                let land = Landscape::read_text(BufReader::new(File::open(path)?))?;
                to_growth_field(&land, *mu_plus, *mu_minus, &domain)?
            }
            FieldSource::Spec(FieldSpec::Generate(g)) => {
                let land = self.generate(g)?;
                to_growth_field(&land, g.mu_plus, g.mu_minus, &domain)?
            }
        })
    }

    fn generate(&self, g: &GeneratorSpec) -> Result<Landscape, CliError> {
        Ok(generate_with(
            g.lattice,
            g.favorable_fraction,
            g.target_s,
            g.seed.unwrap_or(self.cfg.seed),
            g.sweeps,
            &g.anneal,
        )?)
    }

    fn params(&self) -> Result<ModelParams, CliError> {
        let m = &self.cfg.model;
        let params = ModelParams::new(
            m.d,
            self.field(&m.mu)?,
            self.field(&m.nu)?,
            self.field(&m.h)?,
            m.delta,
            m.epsilon,
        )?;
        Ok(params.with_rho(m.rho))
    }
}

fn read_field(path: &Path, domain: &DomainSpec) -> Result<GridField, CliError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(if bytes.starts_with(b"GFLD") {
        fieldio::read_binary(&bytes[..], domain)?
    } else {
        let f = fieldio::read_csv(&bytes[..], Some(domain))?;
        if !same_layout(f.domain(), domain) {
            return Err(CliError::Core(Error::Structural(format!(
                "{} holds a field on {:?}, the configuration asks for {:?}",
                path.display(),
                f.domain(),
                domain
            ))));
        }
        f
    })
}

fn same_layout(a: &DomainSpec, b: &DomainSpec) -> bool {
    a.boundary() == b.boundary() && a.point_counts() == b.point_counts() && a.extents() == b.extents()
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn eig(ctx: &Context) -> Result<Value, CliError> {
    let m = &ctx.cfg.model;
    let mu = ctx.field(&m.mu)?;
    let pair = principal_eigenpair_with(&mu, m.d, &ctx.cfg.solver.eigen)?;
    let lambda2 = second_eigenvalue_given(&mu, m.d, &pair)?;
    let bound = lambda2_lower_bound(mu.domain(), m.d, mu.max());
    let phi = ctx.out.field("phi", &pair.phi)?;
    let summary = json!({
        "lambda1": pair.lambda,
        "lambda2": lambda2,
        "phi_min": pair.phi_min,
        "lambda2_lower_bound": bound,
        "mu_max": mu.max(),
        "residual": pair.residual,
        "iterations": pair.iterations,
        "phi_file": phi,
    });
    ctx.out.json("eig.json", &summary)?;
    Ok(summary)
}

fn branch(b: BranchName) -> Branch {
    match b {
        BranchName::MaximalFromAbove => Branch::MaximalFromAbove,
        BranchName::MinimalSignificant => Branch::MinimalSignificant,
    }
}

pub fn steady(ctx: &Context, count_solutions: bool) -> Result<Value, CliError> {
    let params = ctx.params()?;
    let eig = params.eigenpair().clone();
    let lambda2 = second_eigenvalue_given(params.mu(), params.d(), &eig)?;
    let opts = &ctx.cfg.solver.steady;
    let state = if params.delta() == 0.0 {
        solve_logistic_steady_with(&params, opts)?
    } else {
        solve_harvested_steady_with(&params, branch(ctx.cfg.model.branch), opts)?
    };
    let (delta1, delta2) = match thresholds(&params, &eig) {
        Ok(t) => (finite(t.delta1), finite(t.delta2)),
        Err(_) => (Value::Null, Value::Null),
    };
    let p = ctx.out.field("steady", &state.p)?;
    let mut summary = json!({
        "lambda1": eig.lambda,
        "lambda2": lambda2,
        "phi_min": eig.phi_min,
        "delta": params.delta(),
        "epsilon": params.epsilon(),
        "epsilon0": state.epsilon0,
        "delta1": delta1,
        "delta2": delta2,
        "bracket": Value::Null,
        "classification": state.classification,
        "p_min": state.p.min(),
        "p_max": state.p.max(),
        "residual": state.residual,
        "iterations": state.iterations,
        "steady_file": p,
    });
    if count_solutions {
        let mult = count_significant_solutions(&params, ctx.cfg.solver.probes, ctx.cfg.seed)?;
        if !mult.guarantee_applies {
            warn!(
                "lambda2 = {:e}: outside the regime where at most two solutions are expected",
                mult.lambda2
            );
        }
        for (i, s) in mult.solutions.iter().enumerate() {
            ctx.out.field(&format!("solution{i}"), s)?;
        }
        summary["multiplicity"] = json!({
            "count": mult.count,
            "ordered": mult.ordered,
            "guarantee_applies": mult.guarantee_applies,
            "dropped": mult.dropped,
            "probes": ctx.cfg.solver.probes,
        });
    }
    ctx.out.json("steady.json", &summary)?;
    Ok(summary)
}

pub fn thresholds_cmd(ctx: &Context) -> Result<Value, CliError> {
    let params = ctx.params()?;
    let eig = params.eigenpair().clone();
    let lambda2 = second_eigenvalue_given(params.mu(), params.d(), &eig)?;
    let t = match ctx.cfg.solver.delta_star_tol {
        Some(tol) => locate_delta_star(&params, tol)?,
        None => thresholds(&params, &eig)?,
    };
    let classification = if params.delta() > 0.0 {
        let (c, _, _) = classify_longtime_with(&params, &ctx.cfg.solver.evolve)?;
        json!(c)
    } else {
        Value::Null
    };
    let summary = json!({
        "lambda1": eig.lambda,
        "lambda2": lambda2,
        "phi_min": eig.phi_min,
        "delta1": t.delta1,
        "delta2": t.delta2,
        "bracket": t.delta_star_bracket.map(|(lo, hi)| [lo, hi]),
        "delta": params.delta(),
        "classification": classification,
    });
    ctx.out.json("thresholds.json", &summary)?;
    Ok(summary)
}

pub fn evolve(ctx: &Context) -> Result<Value, CliError> {
    let params = ctx.params()?;
    let ev = &ctx.cfg.evolve;
    let opts = &ctx.cfg.solver.evolve;
    let u0 = match ev.initial {
        InitialDatum::P0 => params.logistic_profile()?.clone(),
        InitialDatum::Constant(c) => GridField::constant(*params.domain(), c),
    };
    let Some(t_end) = ev.t_end else {
        let (c, state, max_increase) = classify_longtime_with(&params, opts)?;
        let f = ctx.out.field("final", &state.p)?;
        let summary = json!({
            "mode": "longtime",
            "delta": params.delta(),
            "classification": c,
            "epsilon0": state.epsilon0,
            "max_increase": max_increase,
            "final_min": state.p.min(),
            "final_max": state.p.max(),
            "final_file": f,
        });
        ctx.out.json("evolve.json", &summary)?;
        return Ok(summary);
    };

    let mut stops: Vec<f64> = ev
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t < t_end)
        .collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    stops.push(t_end);

    let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut u = u0;
    let mut t0 = 0.0;
    let mut steps = 0;
    let mut max_increase = 0.0f64;
    let mut last = None;
    let mut snapshot_files = Vec::new();
    for &stop in &stops {
        let traj = integrate_with(&params, &u, stop - t0, ev.dt, opts)?;
        let skip = usize::from(!rows.is_empty());
        for (t, s) in traj.times.iter().zip(&traj.snapshots).skip(skip) {
            rows.push((t0 + t, s.min(), s.max(), s.mean()));
        }
        steps += traj.steps;
        max_increase = max_increase.max(traj.max_increase);
        u = traj.snapshots.last().expect("trajectory has snapshots").clone();
        if stop < t_end {
            snapshot_files.push(ctx.out.field(&format!("snapshot_t{stop}"), &u)?);
        }
        t0 = stop;
        let converged = traj.converged;
        last = Some(traj);
        if converged {
            info!("stationary at t = {t0}");
        }
    }
    let traj = last.expect("at least one segment");
    let mut w = ctx.out.text("trajectory.csv")?;
    writeln!(w, "t,min_u,max_u,mean_u")?;
    for (t, lo, hi, mean) in &rows {
        writeln!(w, "{t},{lo},{hi},{mean}")?;
    }
    w.flush()?;
    let f = ctx.out.field("final", &traj.final_state.p)?;
    let summary = json!({
        "mode": "fixed",
        "t_end": t_end,
        "delta": params.delta(),
        "steps": steps,
        "converged": traj.converged,
        "stop": traj.stop,
        "classification": traj.final_state.classification,
        "max_increase": max_increase,
        "final_min": traj.final_state.p.min(),
        "final_max": traj.final_state.p.max(),
        "final_file": f,
        "snapshot_files": snapshot_files,
    });
    ctx.out.json("evolve.json", &summary)?;
    Ok(summary)
}

pub fn landscape(ctx: &Context) -> Result<Value, CliError> {
    let g = &ctx.cfg.landscape;
    let land = ctx.generate(g)?;
    let mut w = ctx.out.text("landscape.txt")?;
    land.write_text(&mut w)?;
    w.flush()?;
    let mut w = ctx.out.writer("landscape.pbm")?;
    land.write_pbm(&mut w)?;
    w.flush()?;
    let summary = json!({
        "n": land.n(),
        "n_plus": land.n_plus(),
        "s": land.s(),
        "target_s": g.target_s,
        "seed": land.seed(),
        "max_s": qcyield_core::landscape::max_aggregation(land.n(), land.n_plus()),
    });
    ctx.out.json("landscape.json", &summary)?;
    Ok(summary)
}

pub fn rearrange(ctx: &Context) -> Result<Value, CliError> {
    let r = &ctx.cfg.rearrange;
    let d = ctx.cfg.model.d;
    let q = ctx.field(&r.q)?;
    let tau = q.map(|v| r.mu1 - v);
    let mut q_new = q.clone();
    let mut tau_new = tau.clone();
    for &axis in &r.axes {
        match r.kind {
            RearrangeKind::Steiner => {
                tau_new = steiner_rearrange(&tau_new, axis)?;
                q_new = tau_new.map(|v| r.mu1 - v);
            }
            RearrangeKind::SteinerEffort => {
                q_new = steiner_rearrange(&q_new, axis)?;
                tau_new = q_new.map(|v| r.mu1 - v);
            }
            RearrangeKind::Monotone(dir) => {
                q_new = monotone_rearrange(&q_new, axis, dir)?;
                tau_new = q_new.map(|v| r.mu1 - v);
            }
        }
    }
    let before = principal_eigenpair(&tau, d)?;
    let after = principal_eigenpair(&tau_new, d)?;
    let f = ctx.out.field("q_rearranged", &q_new)?;
    let summary = json!({
        "lambda1_before": before.lambda,
        "lambda1_after": after.lambda,
        "change": after.lambda - before.lambda,
        "q_file": f,
    });
    ctx.out.json("rearrange.json", &summary)?;
    Ok(summary)
}

fn study_config(ctx: &Context) -> StudyConfig {
    let s = &ctx.cfg.study;
    StudyConfig {
        samples: s.samples,
        s_targets: s.s_targets.clone(),
        lattice: s.lattice,
        favorable_fraction: s.favorable_fraction,
        mu_plus: s.mu_plus,
        mu_minus: s.mu_minus,
        grid_points: s.grid_points,
        extent: s.extent,
        d: s.d,
        nu: s.nu,
        h: s.h,
        sweeps: s.sweeps,
        anneal: s.anneal,
        master_seed: ctx.cfg.seed,
        threads: ctx.threads,
    }
}

pub fn study(ctx: &Context) -> Result<Value, CliError> {
    let cfg = study_config(ctx);
    let block = &ctx.cfg.study;
    let mut stream = ctx.out.text("records.stream.csv")?;
    writeln!(stream, "index,seed,target_s,s,lambda1,phi_min,delta1,delta2,status")?;
    let mut io_err = None;
    let records = run_study(&cfg, |r| {
        info!("sample {} s = {} delta1 = {:e}", r.index, r.s, r.delta1);
        if io_err.is_none() {
            if let Err(e) = writeln!(stream, "{}", record_csv_line(r)).and_then(|_| stream.flush()) {
                io_err = Some(e);
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let mut w = ctx.out.text("records.csv")?;
    write_records_csv(&records, &mut w)?;
    w.flush()?;

    let usable: Vec<_> = records.iter().filter(|r| r.is_usable()).collect();
    let failed = records.len() - usable.len();
    let mut summary = json!({
        "samples": records.len(),
        "usable": usable.len(),
        "failed": failed,
    });
    if usable.len() > block.degree + 1 {
        let fit = fit_polynomial(&records, block.degree, block.certainty)?;
        let s: Vec<f64> = usable.iter().map(|r| r.s as f64).collect();
        let d1: Vec<f64> = usable.iter().map(|r| r.delta1).collect();
        let d2: Vec<f64> = usable.iter().map(|r| r.delta2).collect();
        let c1 = stats::spearman(&s, &d1)?;
        let c2 = stats::spearman(&s, &d2)?;
        let outside = |f: &qcyield_core::study::PolyFit, y: &[f64]| {
            s.iter()
                .zip(y)
                .filter(|(x, v)| (f.predict(**x) - **v).abs() > f.half_width(**x))
                .count()
        };
        let curve = fit.curve(block.curve_points);
        let fit_json = json!({
            "fit": fit,
            "spearman": {
                "delta1": {"rho": c1.rho, "p_value": c1.p_value, "n": c1.n},
                "delta2": {"rho": c2.rho, "p_value": c2.p_value, "n": c2.n},
            },
            "outside_band": {"delta1": outside(&fit.delta1, &d1), "delta2": outside(&fit.delta2, &d2)},
        });
        ctx.out.json("fit.json", &fit_json)?;
        let mut w = ctx.out.text("fit.dat")?;
        writeln!(w, "# s delta1_fit delta1_lower delta2_fit delta2_upper")?;
        for c in &curve {
            writeln!(
                w,
                "{} {} {} {} {}",
                c.s, c.delta1_fit, c.delta1_lo, c.delta2_fit, c.delta2_up
            )?;
        }
        w.flush()?;
        if block.svg {
            let mut w = ctx.out.writer("study.svg")?;
            w.write_all(study_svg(&records, &curve).as_bytes())?;
            w.flush()?;
        }
        summary["spearman_delta1"] = json!(c1.rho);
        summary["spearman_delta2"] = json!(c2.rho);
        summary["fit_file"] = json!(ctx.out.path("fit.json"));
    } else {
        warn!(
            "{} usable samples are too few for a degree-{} fit; skipped",
            usable.len(),
            block.degree
        );
    }
    summary["records_file"] = json!(ctx.out.path("records.csv"));
    Ok(summary)
}

pub fn gap(ctx: &Context) -> Result<Value, CliError> {
    let mu0 = ctx.field(&ctx.cfg.model.mu)?;
    let report = gap_report(&mu0, ctx.cfg.model.d, &ctx.cfg.gap.mu_minus)?;
    let mut w = ctx.out.text("gap.csv")?;
    writeln!(
        w,
        "mu_minus,mu_plus,lambda1,delta1,delta2,gap,gap_identity,relative_gap"
    )?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.mu_minus, r.mu_plus, r.lambda1, r.delta1, r.delta2, r.gap, r.gap_identity, r.relative_gap
        )?;
    }
    w.flush()?;
    let summary = serde_json::to_value(&report).map_err(std::io::Error::from)?;
    ctx.out.json("gap.json", &summary)?;
    Ok(summary)
}
