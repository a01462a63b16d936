//! The JSON experiment configuration: defaults, `--set` overrides,
//! validation and the normalized form used for hashing.

use std::fmt;
use std::path::{Path, PathBuf};

use qcyield_core::evolution::EvolveOptions;
use qcyield_core::landscape::{max_aggregation, min_aggregation, AnnealSchedule};
use qcyield_core::spectral::EigenOptions;
use qcyield_core::study::STargets;
use qcyield_core::{Boundary, Monotone, RhoShape, SteadyOptions};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainBlock,
    pub model: ModelBlock,
    pub solver: SolverBlock,
    pub evolve: EvolveBlock,
    pub rearrange: RearrangeBlock,
    pub landscape: GeneratorSpec,
    pub study: StudyBlock,
    pub gap: GapBlock,
    pub output: OutputBlock,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: DomainBlock::default(),
            model: ModelBlock::default(),
            solver: SolverBlock::default(),
            evolve: EvolveBlock::default(),
            rearrange: RearrangeBlock::default(),
            landscape: GeneratorSpec::default(),
            study: StudyBlock::default(),
            gap: GapBlock::default(),
            output: OutputBlock::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainBlock {
    pub boundary: Boundary,
    pub extents: Vec<f64>,
    pub points: Vec<usize>,
}

impl Default for DomainBlock {
    fn default() -> Self {
        Self {
            boundary: Boundary::Periodic,
            extents: vec![1.0, 1.0],
            points: vec![128, 128],
        }
    }
}

/// Where a coefficient field comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSource {
    Constant(f64),
    Spec(FieldSpec),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// A GridField CSV or GFLD file.
    File { path: PathBuf },
    /// A landscape text file mapped to `mu_plus`/`mu_minus`.
    Landscape {
        path: PathBuf,
        mu_plus: f64,
        mu_minus: f64,
    },
    /// A freshly generated landscape.
    Generate(GeneratorSpec),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub lattice: usize,
    pub favorable_fraction: f64,
    pub target_s: u64,
    pub sweeps: usize,
    pub anneal: AnnealSchedule,
    pub mu_plus: f64,
    pub mu_minus: f64,
    /// Defaults to the top-level seed.
    pub seed: Option<u64>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            lattice: 50,
            favorable_fraction: 0.2,
            target_s: 4000,
            sweeps: 500,
            anneal: AnnealSchedule::default(),
            mu_plus: 10.0,
            mu_minus: 0.0,
            seed: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchName {
    MaximalFromAbove,
    MinimalSignificant,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub d: f64,
    pub mu: FieldSource,
    pub nu: FieldSource,
    pub h: FieldSource,
    pub delta: f64,
    /// `None` picks `10⁻³·(−λ₁φ̲/ν̄)`.
    pub epsilon: Option<f64>,
    pub rho: RhoShape,
    pub branch: BranchName,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            d: 1.0,
            mu: FieldSource::Constant(1.0),
            nu: FieldSource::Constant(1.0),
            h: FieldSource::Constant(1.0),
            delta: 0.0,
            epsilon: None,
            rho: RhoShape::Cubic,
            branch: BranchName::MaximalFromAbove,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub eigen: EigenOptions,
    pub steady: SteadyOptions,
    pub evolve: EvolveOptions,
    /// Bisection tolerance for `δ*`; `None` skips the bracket.
    pub delta_star_tol: Option<f64>,
    pub probes: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            eigen: EigenOptions::default(),
            steady: SteadyOptions::default(),
            evolve: EvolveOptions::default(),
            delta_star_tol: Some(1e-3),
            probes: 24,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDatum {
    P0,
    Constant(f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveBlock {
    /// `None` runs the long-time classification from `p₀` instead.
    pub t_end: Option<f64>,
    pub dt: f64,
    pub initial: InitialDatum,
    /// Times at which the full field is written out.
    pub snapshot_times: Vec<f64>,
}

impl Default for EvolveBlock {
    fn default() -> Self {
        Self {
            t_end: None,
            dt: 0.1,
            initial: InitialDatum::P0,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RearrangeKind {
    /// Symmetric decreasing profile of `μ₁ − q`.
    Steiner,
    /// Symmetric decreasing profile of `q` itself.
    SteinerEffort,
    Monotone(Monotone),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RearrangeBlock {
    /// Harvest effort `q`.
    pub q: FieldSource,
    /// The constant growth rate `μ₁`.
    pub mu1: f64,
    pub kind: RearrangeKind,
    /// Axes rearranged in turn.
    pub axes: Vec<usize>,
}

impl Default for RearrangeBlock {
    fn default() -> Self {
        Self {
            q: FieldSource::Constant(0.0),
            mu1: 1.0,
            kind: RearrangeKind::Steiner,
            axes: vec![0],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyBlock {
    pub samples: usize,
    pub s_targets: STargets,
    pub lattice: usize,
    pub favorable_fraction: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub grid_points: usize,
    pub extent: f64,
    pub d: f64,
    pub nu: f64,
    pub h: f64,
    pub sweeps: usize,
    pub anneal: AnnealSchedule,
    pub degree: usize,
    pub certainty: f64,
    pub curve_points: usize,
    pub svg: bool,
}

impl Default for StudyBlock {
    fn default() -> Self {
        let s = qcyield_core::StudyConfig::default();
        Self {
            samples: s.samples,
            s_targets: s.s_targets,
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
            degree: 9,
            certainty: 0.99,
            curve_points: 200,
            svg: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapBlock {
    pub mu_minus: Vec<f64>,
}

impl Default for GapBlock {
    fn default() -> Self {
        Self {
            mu_minus: vec![0.0, 1.0, 5.0],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
    /// Field files as GFLD binary instead of CSV.
    pub binary_fields: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("qcyield-out"),
            binary_fields: false,
        }
    }
}

/// Every problem found in a configuration, each with its path.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<(String, String)>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (path, msg)) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{path}: {msg}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn single(path: &str, msg: impl Into<String>) -> ConfigErrors {
    ConfigErrors(vec![(path.to_string(), msg.into())])
}

/// Applies `key.sub=value` to a JSON tree; the value is parsed as JSON,
/// falling back to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), ConfigErrors> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| single(assignment, "expected KEY=VALUE"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(single(key, "empty path segment"));
        }
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        let map = node.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Reads `path` (or starts from the defaults), applies the overrides and
    /// validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigErrors> {
        let mut tree = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| single(&p.display().to_string(), e.to_string()))?;
                serde_json::from_str(&text)
                    .map_err(|e| single(&p.display().to_string(), e.to_string()))?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: Self = serde_json::from_value(tree).map_err(|e| single("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    /// SHA-256 of the normalized configuration, leaving out the output
    /// directory so that reruns elsewhere carry the same hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        let digest = Sha256::digest(serde_json::to_vec(&c).expect("configuration serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        let mut bad = |path: &str, msg: String| errs.push((path.to_string(), msg));
        let dom = &self.domain;
        let dim = dom.extents.len();
        if !(1..=2).contains(&dim) {
            bad("domain.extents", format!("need 1 or 2 extents, got {dim}"));
        }
        if dom.points.len() != dim {
            bad(
                "domain.points",
                format!("{} point counts for {dim} extents", dom.points.len()),
            );
        }
        for (i, e) in dom.extents.iter().enumerate() {
            if !(e.is_finite() && *e > 0.0) {
                bad(&format!("domain.extents[{i}]"), format!("must be positive, got {e}"));
            }
        }
        for (i, m) in dom.points.iter().enumerate() {
            if *m < 3 {
                bad(&format!("domain.points[{i}]"), format!("need at least 3 points, got {m}"));
            }
        }
        let model = &self.model;
        if !(model.d > 0.0 && model.d.is_finite()) {
            bad("model.d", format!("must be positive, got {}", model.d));
        }
        check_source(&mut bad, "model.mu", &model.mu, None, dom, dim);
        check_source(&mut bad, "model.nu", &model.nu, Some((f64::MIN_POSITIVE, f64::INFINITY)), dom, dim);
        check_source(&mut bad, "model.h", &model.h, Some((f64::MIN_POSITIVE, 1.0)), dom, dim);
        if !(model.delta >= 0.0 && model.delta.is_finite()) {
            bad("model.delta", format!("must be nonnegative, got {}", model.delta));
        }
        if model.delta > 0.0 && dom.boundary == Boundary::Dirichlet {
            bad(
                "model.delta",
                "harvesting needs periodic or Neumann boundaries".to_string(),
            );
        }
        if let Some(e) = model.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                bad("model.epsilon", format!("must be positive, got {e}"));
            }
        }
        let s = &self.solver;
        for (path, v) in [
            ("solver.eigen.eigenvalue_tol", s.eigen.eigenvalue_tol),
            ("solver.eigen.residual_tol", s.eigen.residual_tol),
            ("solver.steady.step_tol", s.steady.step_tol),
            ("solver.steady.residual_tol", s.steady.residual_tol),
            ("solver.evolve.rate_tol", s.evolve.rate_tol),
            ("solver.evolve.t_cap", s.evolve.t_cap),
            ("solver.evolve.max_dt", s.evolve.max_dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad(path, format!("must be positive, got {v}"));
            }
        }
        if let Some(t) = s.delta_star_tol {
            if !(t > 0.0) {
                bad("solver.delta_star_tol", format!("must be positive, got {t}"));
            }
        }
        if s.probes == 0 {
            bad("solver.probes", "need at least one probe".to_string());
        }
        if let Some(t) = self.evolve.t_end {
            if !(t > 0.0 && t.is_finite()) {
                bad("evolve.t_end", format!("must be positive, got {t}"));
            }
        }
        if !(self.evolve.dt > 0.0) {
            bad("evolve.dt", format!("must be positive, got {}", self.evolve.dt));
        }
        for (i, t) in self.evolve.snapshot_times.iter().enumerate() {
            if !(*t > 0.0 && t.is_finite()) {
                bad(&format!("evolve.snapshot_times[{i}]"), format!("must be positive, got {t}"));
            }
        }
        if let InitialDatum::Constant(c) = self.evolve.initial {
            if !(c >= 0.0 && c.is_finite()) {
                bad("evolve.initial.constant", format!("must be nonnegative, got {c}"));
            }
        }
        let r = &self.rearrange;
        check_source(&mut bad, "rearrange.q", &r.q, Some((0.0, f64::INFINITY)), dom, dim);
        for (i, a) in r.axes.iter().enumerate() {
            if *a >= dim.max(1) {
                bad(&format!("rearrange.axes[{i}]"), format!("axis {a} out of range for {dim}-D"));
            }
        }
        let st = &self.study;
        if st.samples == 0 {
            bad("study.samples", "need at least one sample".to_string());
        }
        if st.samples <= st.degree + 1 {
            bad(
                "study.degree",
                format!("a degree-{} fit needs more than {} samples", st.degree, st.degree + 1),
            );
        }
        if !(st.certainty > 0.0 && st.certainty < 1.0) {
            bad("study.certainty", format!("must lie in (0, 1), got {}", st.certainty));
        }
        if st.lattice < 3 {
            bad("study.lattice", format!("need at least 3, got {}", st.lattice));
        } else if st.grid_points % st.lattice != 0 {
            bad(
                "study.grid_points",
                format!("{} is not a multiple of the lattice {}", st.grid_points, st.lattice),
            );
        }
        if st.lattice >= 3
            && check_fraction(&mut bad, "study.favorable_fraction", st.favorable_fraction)
        {
            let n_plus = (st.favorable_fraction * (st.lattice * st.lattice) as f64).round() as usize;
            let range = (min_aggregation(st.lattice, n_plus), max_aggregation(st.lattice, n_plus));
            match &st.s_targets {
                STargets::Range { lo, hi } => {
                    if lo > hi {
                        bad("study.s_targets.range", format!("lo {lo} exceeds hi {hi}"));
                    }
                    for (name, v) in [("lo", lo), ("hi", hi)] {
                        check_target(&mut bad, &format!("study.s_targets.range.{name}"), *v, range);
                    }
                }
                STargets::List(v) => {
                    if v.is_empty() {
                        bad("study.s_targets.list", "empty target list".to_string());
                    }
                    for (i, t) in v.iter().enumerate() {
                        check_target(&mut bad, &format!("study.s_targets.list[{i}]"), *t, range);
                    }
                }
            }
        }
        for (path, v) in [
            ("study.extent", st.extent),
            ("study.d", st.d),
            ("study.nu", st.nu),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad(path, format!("must be positive, got {v}"));
            }
        }
        if !(st.h > 0.0 && st.h <= 1.0) {
            bad("study.h", format!("must lie in (0, 1], got {}", st.h));
        }
        check_generator(&mut bad, "landscape", &self.landscape);
        if self.gap.mu_minus.is_empty() {
            bad("gap.mu_minus", "need at least one value".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errs))
        }
    }
}

fn check_fraction(bad: &mut impl FnMut(&str, String), path: &str, f: f64) -> bool {
    let ok = (0.0..=1.0).contains(&f);
    if !ok {
        bad(path, format!("must lie in [0, 1], got {f}"));
    }
    ok
}

fn check_target(bad: &mut impl FnMut(&str, String), path: &str, s: u64, (lo, hi): (u64, u64)) {
    if s % 2 != 0 || s < lo || s > hi {
        bad(path, format!("{s} is not an even value in the achievable range [{lo}, {hi}]"));
    }
}

fn check_source(
    bad: &mut impl FnMut(&str, String),
    path: &str,
    src: &FieldSource,
    range: Option<(f64, f64)>,
    dom: &DomainBlock,
    dim: usize,
) {
    match src {
        FieldSource::Constant(c) => {
            if !c.is_finite() {
                bad(path, format!("must be finite, got {c}"));
            } else if let Some((lo, hi)) = range {
                if *c < lo || *c > hi {
                    bad(path, format!("{c} outside [{lo}, {hi}]"));
                }
            }
        }
        FieldSource::Spec(FieldSpec::File { path: p }) | FieldSource::Spec(FieldSpec::Landscape { path: p, .. }) => {
            if !p.exists() {
                bad(path, format!("file {} does not exist", p.display()));
            }
        }
        FieldSource::Spec(FieldSpec::Generate(g)) => {
            if dim != 2 || dom.boundary != Boundary::Periodic {
                bad(path, "landscapes need a periodic 2-D domain".to_string());
            }
            for (i, m) in dom.points.iter().enumerate() {
                if g.lattice > 0 && m % g.lattice != 0 {
                    bad(
                        &format!("domain.points[{i}]"),
                        format!("{m} is not a multiple of the lattice {} used by {path}", g.lattice),
                    );
                }
            }
            check_generator(bad, &format!("{path}.generate"), g);
        }
    }
}

fn check_generator(bad: &mut impl FnMut(&str, String), path: &str, g: &GeneratorSpec) {
    if g.lattice < 3 {
        bad(&format!("{path}.lattice"), format!("need at least 3, got {}", g.lattice));
        return;
    }
    if !check_fraction(bad, &format!("{path}.favorable_fraction"), g.favorable_fraction) {
        return;
    }
    let n_plus = (g.favorable_fraction * (g.lattice * g.lattice) as f64).round() as usize;
    let range = (min_aggregation(g.lattice, n_plus), max_aggregation(g.lattice, n_plus));
    check_target(bad, &format!("{path}.target_s"), g.target_s, range);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_create_nested_keys() {
        let mut v = Value::Object(Default::default());
        apply_override(&mut v, "model.mu=4").unwrap();
        apply_override(&mut v, "domain.boundary=neumann").unwrap();
        assert_eq!(v["model"]["mu"], 4);
        assert_eq!(v["domain"]["boundary"], "neumann");
        assert!(apply_override(&mut v, "nothing").is_err());
    }

    #[test]
    fn all_errors_are_reported() {
        let sets = [
            "model.d=-1".to_string(),
            "model.h=2".to_string(),
            "study.certainty=1.5".to_string(),
            "domain.points=[2,64]".to_string(),
        ];
        let errs = ExperimentConfig::load(None, &sets).unwrap_err();
        let paths: Vec<&str> = errs.0.iter().map(|(p, _)| p.as_str()).collect();
        for want in ["model.d", "model.h", "study.certainty", "domain.points[0]"] {
            assert!(paths.contains(&want), "{want} missing from {paths:?}");
        }
    }

    #[test]
    fn normalized_form_round_trips() {
        let cfg = ExperimentConfig::load(None, &["model.mu=2.5".into()]).unwrap();
        let text = cfg.to_json();
        let again: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(again.to_json(), text);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::load(None, &["model.muu=1".into()]).is_err());
    }
}
