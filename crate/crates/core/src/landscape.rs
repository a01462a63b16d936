//! Binary habitat landscapes on an `n × n` torus with the 4-neighbourhood,
//! their aggregation index, growth-rate fields built from them, and the
//! line-wise rearrangement operators.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, structural, Error, Result};
use crate::grid::{Boundary, DomainSpec, GridField};

/// Cells are stored row-major, `cells[r·n + c]`; `true` is favourable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Landscape {
    n: usize,
    cells: Vec<bool>,
    n_plus: usize,
    s: u64,
    seed: u64,
}

impl Landscape {
    pub fn from_cells(n: usize, cells: Vec<bool>) -> Result<Self> {
        if n < 3 {
            return contract(format!("lattice side must be at least 3, got {n}"));
        }
        if cells.len() != n * n {
            return structural(format!("{} cells for a {n}×{n} lattice", cells.len()));
        }
        let n_plus = cells.iter().filter(|&&c| c).count();
        let mut l = Self {
            n,
            cells,
            n_plus,
            s: 0,
            seed: 0,
        };
        l.s = count_matching_pairs(n, &l.cells);
        Ok(l)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.n + c]
    }

    pub fn n_plus(&self) -> usize {
        self.n_plus
    }

    /// Aggregation index maintained during generation.
    pub fn s(&self) -> u64 {
        self.s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Writes the text format: a header line `n n_plus s seed` followed by
    /// `n` rows of `0`/`1`. Readers skip lines starting with `#`.
    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{} {} {} {}", self.n, self.n_plus, self.s, self.seed)?;
        for row in self.cells.chunks(self.n) {
            let line: String = row.iter().map(|&c| if c { '1' } else { '0' }).collect();
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_text(r: impl BufRead) -> Result<Self> {
        let mut lines = r
            .lines()
            .filter(|l| !matches!(l, Ok(t) if t.starts_with('#')));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty landscape file".into()))??;
        let fields: Vec<u64> = header
            .split_whitespace()
            .map(|t| {
                t.parse::<u64>()
                    .map_err(|e| Error::Parse(format!("header field {t:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        let [n, n_plus, s, seed] = fields[..] else {
            return Err(Error::Parse(format!(
                "expected `n n_plus s seed`, got {header:?}"
            )));
        };
        let n = n as usize;
        let mut cells = Vec::with_capacity(n * n);
        for line in lines.take(n) {
            let line = line?;
            let row = line.trim();
            if row.len() != n {
                return Err(Error::Parse(format!(
                    "row of length {} in a {n}-lattice",
                    row.len()
                )));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    '1' => true,
                    '0' => false,
                    other => {
                        return Err(Error::Parse(format!("unexpected cell character {other:?}")))
                    }
                });
            }
        }
        let mut l = Landscape::from_cells(n, cells)?;
        if l.n_plus as u64 != n_plus || l.s != s {
            return Err(Error::Parse(format!(
                "header says n_plus={n_plus}, s={s}; cells give n_plus={}, s={}",
                l.n_plus, l.s
            )));
        }
        l.seed = seed;
        Ok(l)
    }

    /// Plain PBM (`P1`), favourable cells black.
    pub fn write_pbm(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "P1")?;
        writeln!(w, "{} {}", self.n, self.n)?;
        for row in self.cells.chunks(self.n) {
            let line: Vec<&str> = row.iter().map(|&c| if c { "1" } else { "0" }).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

fn count_matching_pairs(n: usize, cells: &[bool]) -> u64 {
    let mut s = 0;
    for r in 0..n {
        for c in 0..n {
            let v = cells[r * n + c];
            s += u64::from(v == cells[r * n + (c + 1) % n]);
            s += u64::from(v == cells[((r + 1) % n) * n + c]);
        }
    }
    s
}

/// Number of same-valued toric 4-neighbour pairs, each pair counted once.
pub fn aggregation_index(landscape: &Landscape) -> u64 {
    count_matching_pairs(landscape.n, &landscape.cells)
}

/// Largest achievable aggregation index with `n_plus` favourable cells:
/// the minority set is as compact as possible, either a near-square or a
/// band wrapping around the torus.
pub fn max_aggregation(n: usize, n_plus: usize) -> u64 {
    let total = (n * n) as u64;
    let k = n_plus.min(n * n - n_plus);
    if k == 0 {
        return 2 * total;
    }
    let compact = 2 * (2.0 * (k as f64).sqrt() - 1e-9).ceil() as u64;
    let band = if k < n {
        u64::MAX
    } else if k % n == 0 {
        2 * n as u64
    } else {
        2 * n as u64 + 2
    };
    2 * total - compact.min(band)
}

/// Smallest aggregation index this generator accepts: every minority cell
/// isolated.
pub fn min_aggregation(n: usize, n_plus: usize) -> u64 {
    let k = n_plus.min(n * n - n_plus) as u64;
    (2 * (n * n) as u64).saturating_sub(4 * k)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    /// Initial temperature, in units of `|s − target|`.
    pub t0: f64,
    /// Geometric cooling factor per sweep.
    pub cooling: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            t0: 2.0,
            cooling: 0.99,
        }
    }
}

/// Metropolis pair-swap annealing toward aggregation index `target_s` with
/// exactly `round(favorable_fraction·n²)` favourable cells.
pub fn generate(
    n: usize,
    favorable_fraction: f64,
    target_s: u64,
    seed: u64,
    sweeps: usize,
) -> Result<Landscape> {
    generate_with(
        n,
        favorable_fraction,
        target_s,
        seed,
        sweeps,
        &AnnealSchedule::default(),
    )
}

pub fn generate_with(
    n: usize,
    favorable_fraction: f64,
    target_s: u64,
    seed: u64,
    sweeps: usize,
    schedule: &AnnealSchedule,
) -> Result<Landscape> {
    if n < 3 {
        return contract(format!("lattice side must be at least 3, got {n}"));
    }
    if !(0.0..=1.0).contains(&favorable_fraction) {
        return contract(format!(
            "favourable fraction must lie in [0, 1], got {favorable_fraction}"
        ));
    }
    if !(schedule.t0 > 0.0 && schedule.cooling > 0.0 && schedule.cooling <= 1.0) {
        return contract(format!(
            "annealing needs t0 > 0 and cooling in (0, 1], got {} and {}",
            schedule.t0, schedule.cooling
        ));
    }
    let total = n * n;
    let n_plus = (favorable_fraction * total as f64).round() as usize;
    let (lo, hi) = (min_aggregation(n, n_plus), max_aggregation(n, n_plus));
    if target_s % 2 != 0 || target_s < lo || target_s > hi {
        return contract(format!(
            "target s = {target_s} is not an even value in [{lo}, {hi}] for n = {n}, n_plus = {n_plus}"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Uniform placement: a partial Fisher–Yates shuffle picks the favourable cells.
    let mut order: Vec<usize> = (0..total).collect();
    for i in 0..n_plus {
        let j = rng.random_range(i..total);
        order.swap(i, j);
    }
    let mut cells = vec![false; total];
    for &k in &order[..n_plus] {
        cells[k] = true;
    }
    let mut chain = Chain::new(n, cells);
    let mut temp = schedule.t0;
    let gap = |s: u64| s.abs_diff(target_s);
    let mut best = (chain.s, chain.cells.clone());
    'outer: for _ in 0..sweeps {
        if chain.s == target_s {
            break;
        }
        if chain.plus.is_empty() || chain.minus.is_empty() {
            break;
        }
        for _ in 0..total {
            let (i, j) = if rng.random_bool(0.5) {
                chain.interface_pair(&mut rng)
            } else {
                None
            }
            .unwrap_or_else(|| {
                (
                    rng.random_range(0..chain.plus.len()),
                    rng.random_range(0..chain.minus.len()),
                )
            });
            let (a, b) = (chain.plus[i], chain.minus[j]);
            let ds = chain.swap_delta(a, b);
            let s_new = chain.s as i64 + ds;
            let before = (chain.s as i64 - target_s as i64).abs();
            let after = (s_new - target_s as i64).abs();
            let worse = (after - before) as f64;
            if worse <= 0.0 || rng.random::<f64>() < (-worse / temp).exp() {
                chain.swap(i, j, s_new as u64);
                if gap(chain.s) < gap(best.0) {
                    best.0 = chain.s;
                    best.1.copy_from_slice(&chain.cells);
                }
                if chain.s == target_s {
                    break 'outer;
                }
            }
        }
        temp *= schedule.cooling;
    }
    let mut l = Landscape {
        n,
        n_plus,
        s: best.0,
        cells: best.1,
        seed,
    };
    debug_assert_eq!(l.s, aggregation_index(&l));
    l.seed = seed;
    Ok(l)
}

struct Chain {
    n: usize,
    cells: Vec<bool>,
    plus: Vec<usize>,
    minus: Vec<usize>,
    s: u64,
}

impl Chain {
    fn new(n: usize, cells: Vec<bool>) -> Self {
        let mut plus = Vec::new();
        let mut minus = Vec::new();
        for (k, &c) in cells.iter().enumerate() {
            if c {
                plus.push(k);
            } else {
                minus.push(k);
            }
        }
        let s = count_matching_pairs(n, &cells);
        Self {
            n,
            cells,
            plus,
            minus,
            s,
        }
    }

    /// A favourable and an unfavourable cell that both touch the interface,
    /// by rejection sampling from the two lists.
    fn interface_pair(&self, rng: &mut ChaCha8Rng) -> Option<(usize, usize)> {
        const TRIES: usize = 64;
        let i = (0..TRIES)
            .map(|_| rng.random_range(0..self.plus.len()))
            .find(|&i| self.matches(self.plus[i], false) > 0)?;
        let j = (0..TRIES)
            .map(|_| rng.random_range(0..self.minus.len()))
            .find(|&j| self.matches(self.minus[j], true) > 0)?;
        Some((i, j))
    }

    fn neighbours(&self, k: usize) -> [usize; 4] {
        let n = self.n;
        let (r, c) = (k / n, k % n);
        [
            r * n + (c + 1) % n,
            r * n + (c + n - 1) % n,
            ((r + 1) % n) * n + c,
            ((r + n - 1) % n) * n + c,
        ]
    }

    fn matches(&self, k: usize, value: bool) -> i64 {
        self.neighbours(k)
            .iter()
            .filter(|&&j| self.cells[j] == value)
            .count() as i64
    }

    /// Change in `s` from turning favourable `a` unfavourable and `b`
    /// favourable. An edge joining `a` to `b` mismatches before and after, so
    /// the two local counts can simply be added.
    fn swap_delta(&self, a: usize, b: usize) -> i64 {
        let before = self.matches(a, true) + self.matches(b, false);
        let mut after = 0;
        for (k, v) in [(a, false), (b, true)] {
            for j in self.neighbours(k) {
                let w = if j == a {
                    false
                } else if j == b {
                    true
                } else {
                    self.cells[j]
                };
                after += i64::from(w == v);
            }
        }
        after - before
    }

    fn swap(&mut self, i: usize, j: usize, s_new: u64) {
        let (a, b) = (self.plus[i], self.minus[j]);
        self.cells[a] = false;
        self.cells[b] = true;
        self.plus[i] = b;
        self.minus[j] = a;
        self.s = s_new;
    }
}

/// Piecewise-constant growth rate: each landscape cell covers a block of
/// grid nodes on a periodic 2-D `domain` whose resolution is a multiple of
/// `n` on both axes.
pub fn to_growth_field(
    landscape: &Landscape,
    mu_plus: f64,
    mu_minus: f64,
    domain: &DomainSpec,
) -> Result<GridField> {
    let n = landscape.n;
    if domain.boundary() != Boundary::Periodic || domain.dim() != 2 {
        return contract("landscapes map onto periodic two-dimensional grids only");
    }
    let (m0, m1) = domain.shape();
    if m0 % n != 0 || m1 % n != 0 {
        return contract(format!(
            "grid {m0}×{m1} is not a multiple of the {n}×{n} lattice"
        ));
    }
    let (b0, b1) = (m0 / n, m1 / n);
    let values = (0..m0 * m1)
        .map(|k| {
            let (i0, i1) = (k / m1, k % m1);
            if landscape.get(i0 / b0, i1 / b1) {
                mu_plus
            } else {
                mu_minus
            }
        })
        .collect();
    GridField::new(*domain, values)
}

fn axis_lines(domain: &DomainSpec, axis: usize) -> Result<Vec<Vec<usize>>> {
    if axis >= domain.dim() {
        return contract(format!(
            "axis {axis} out of range for a {}-D domain",
            domain.dim()
        ));
    }
    let (m0, m1) = domain.shape();
    Ok(if axis == 0 {
        (0..m1)
            .map(|j| (0..m0).map(|i| i * m1 + j).collect())
            .collect()
    } else {
        (0..m0)
            .map(|i| (0..m1).map(|j| i * m1 + j).collect())
            .collect()
    })
}

/// Positions visited when filling a line of length `m` from the largest
/// value down: the centre `⌈(m−1)/2⌉`, then right, left, right, ...
fn steiner_positions(m: usize) -> Vec<usize> {
    let c = m / 2;
    let mut out = Vec::with_capacity(m);
    out.push(c);
    for off in 1..=m {
        if c + off < m {
            out.push(c + off);
        }
        if off <= c {
            out.push(c - off);
        }
    }
    out
}

fn sorted_desc(vals: &[f64], line: &[usize]) -> Vec<f64> {
    let mut v: Vec<f64> = line.iter().map(|&k| vals[k]).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Symmetric decreasing rearrangement of every grid line parallel to
/// `axis`; ties keep their original order.
pub fn steiner_rearrange(q: &GridField, axis: usize) -> Result<GridField> {
    let lines = axis_lines(q.domain(), axis)?;
    let mut out = q.values().to_vec();
    for line in &lines {
        let sorted = sorted_desc(q.values(), line);
        for (v, p) in sorted.into_iter().zip(steiner_positions(line.len())) {
            out[line[p]] = v;
        }
    }
    GridField::new(*q.domain(), out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotone {
    Increasing,
    Decreasing,
}

/// Sorts every grid line parallel to `axis`.
pub fn monotone_rearrange(q: &GridField, axis: usize, direction: Monotone) -> Result<GridField> {
    let lines = axis_lines(q.domain(), axis)?;
    let mut out = q.values().to_vec();
    for line in &lines {
        let mut sorted = sorted_desc(q.values(), line);
        if direction == Monotone::Increasing {
            sorted.reverse();
        }
        for (v, &k) in sorted.into_iter().zip(line) {
            out[k] = v;
        }
    }
    GridField::new(*q.domain(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(n: usize, rows: usize, cols: usize) -> Landscape {
        let cells = (0..n * n).map(|k| k / n < rows && k % n < cols).collect();
        Landscape::from_cells(n, cells).unwrap()
    }

    #[test]
    fn index_of_simple_patterns() {
        assert_eq!(aggregation_index(&block(50, 50, 50)), 5000);
        assert_eq!(aggregation_index(&block(50, 25, 20)), 4910);
        let checker =
            Landscape::from_cells(6, (0..36).map(|k| (k / 6 + k % 6) % 2 == 0).collect()).unwrap();
        assert_eq!(aggregation_index(&checker), 0);
    }

    #[test]
    fn achievable_range() {
        assert_eq!(max_aggregation(50, 500), 4910);
        assert_eq!(min_aggregation(50, 500), 3000);
        assert_eq!(max_aggregation(10, 30), 200 - 20);
        assert_eq!(max_aggregation(10, 0), 200);
    }

    #[test]
    fn steiner_line_example() {
        let d = DomainSpec::new(Boundary::Neumann, &[1.0], &[5]).unwrap();
        let q = GridField::new(d, vec![1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
        assert_eq!(
            steiner_rearrange(&q, 0).unwrap().values(),
            &[1.0, 3.0, 5.0, 4.0, 2.0]
        );
        let q = GridField::new(d, vec![1.0, 3.0, 2.0, 0.0, 0.0]).unwrap();
        let m = monotone_rearrange(&q, 0, Monotone::Decreasing).unwrap();
        assert_eq!(m.values(), &[3.0, 2.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn positions_cover_every_index() {
        for m in 1..12 {
            let mut p = steiner_positions(m);
            assert_eq!(p[0], (m.saturating_sub(1)).div_ceil(2));
            p.sort_unstable();
            assert_eq!(p, (0..m).collect::<Vec<_>>());
        }
    }

    #[test]
    fn text_round_trip() {
        let l = generate(12, 0.25, 240, 3, 50).unwrap();
        let mut buf = Vec::new();
        l.write_text(&mut buf).unwrap();
        let back = Landscape::read_text(&buf[..]).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn infeasible_targets_rejected() {
        assert!(generate(50, 0.2, 4912, 1, 10).is_err());
        assert!(generate(50, 0.2, 4001, 1, 10).is_err());
        assert!(generate(50, 0.2, 2998, 1, 10).is_err());
    }
}
