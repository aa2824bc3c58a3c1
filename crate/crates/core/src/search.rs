//! Exhaustive sweeps over candidate backward tables.
//!
//! Small cases enumerate every surjective partial table up to symmetry and
//! look for a (∗)-witness in each. Cases too large for that, where every
//! fiber without singletons is forced to have exactly two cells, sweep the
//! perfect pairings of the grid instead and count bad three-fiber
//! collections.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covering::{
    find_star_witness, singleton_witness, star_holds_for, Dims, EscapeMode, PsiTable,
    SingletonStrategy, StarChecker, StarOutcome, WitnessSearch,
};
use crate::error::{Error, Result};

/// Env var overriding [`DEFAULT_RAW_CAP`].
pub const BUDGET_ENV: &str = "RTWL_BUDGET_CELLS";
pub const DEFAULT_RAW_CAP: u128 = 5_000_000;
pub const MAX_GROUP: usize = 100_000;
/// Work units per sweep; fixed so reports do not depend on the worker count.
const SHARDS: u64 = 256;

pub fn raw_cap_from_env() -> Result<u128> {
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| Error::InvalidArgument(format!("{BUDGET_ENV}={v:?}: {e}"))),
        Err(_) => Ok(DEFAULT_RAW_CAP),
    }
}

/// `(2c)! / (2^c c!)`, the number of perfect pairings of `2c` cells.
pub fn pairing_count(cells: usize) -> Result<u128> {
    if cells % 2 == 1 {
        return Err(Error::InvalidDims(format!(
            "{cells} cells cannot be paired"
        )));
    }
    let mut acc = 1u128;
    let mut odd = 1u128;
    while odd < cells as u128 {
        acc = acc.checked_mul(odd).ok_or(Error::Budget {
            what: "pairing count",
            requested: u128::MAX,
            cap: u128::MAX,
        })?;
        odd += 2;
    }
    Ok(acc)
}

/// A partition of the grid cells into two-cell fibers. Pairs are ordered by
/// their smaller cell, and pair `i` is color `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Pairing {
    dims: Dims,
    pairs: Vec<(usize, usize)>,
}

impl Pairing {
    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn to_table(&self) -> PsiTable {
        let mut cells = vec![None; self.dims.cells()];
        for (i, &(a, b)) in self.pairs.iter().enumerate() {
            cells[a] = Some(i as u32);
            cells[b] = Some(i as u32);
        }
        PsiTable::new(self.dims.clone(), self.pairs.len() as u32, cells)
            .expect("pairing tables are surjective")
    }
}

/// Perfect pairings in lexicographic order of their partner choices: the
/// smallest free cell is paired with each larger free cell in turn.
#[derive(Debug, Clone)]
pub struct PairingEnumerator {
    dims: Dims,
    total: u64,
}

pub fn enumerate_pairings(dims: &Dims) -> Result<PairingEnumerator> {
    if dims.arity() != 2 {
        return Err(Error::InvalidDims(
            "pairings are enumerated on 2-coordinate grids".into(),
        ));
    }
    let total = pairing_count(dims.cells())?;
    let total = u64::try_from(total).map_err(|_| Error::Budget {
        what: "pairings",
        requested: total,
        cap: u128::from(u64::MAX),
    })?;
    Ok(PairingEnumerator {
        dims: dims.clone(),
        total,
    })
}

impl PairingEnumerator {
    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Writes the partner offsets of pairing `index`, most significant first.
    fn digits(&self, mut index: u64, out: &mut [u64]) {
        let c = out.len();
        for j in (0..c).rev() {
            let radix = 2 * (c - j) as u64 - 1;
            out[j] = index % radix;
            index /= radix;
        }
    }

    pub fn unrank(&self, index: u64) -> Pairing {
        assert!(index < self.total, "pairing index out of range");
        let c = self.dims.cells() / 2;
        let mut digits = vec![0u64; c];
        self.digits(index, &mut digits);
        let mut free: Vec<usize> = (0..self.dims.cells()).collect();
        let mut pairs = Vec::with_capacity(c);
        for d in digits {
            let a = free.remove(0);
            let b = free.remove(d as usize);
            pairs.push((a, b));
        }
        Pairing {
            dims: self.dims.clone(),
            pairs,
        }
    }

    /// Fiber masks of pairing `index` into `masks` (grids up to 64 cells).
    fn unrank_masks(&self, index: u64, digits: &mut [u64], masks: &mut [u64]) {
        self.digits(index, digits);
        let mut free: u64 = if self.dims.cells() == 64 {
            u64::MAX
        } else {
            (1u64 << self.dims.cells()) - 1
        };
        for (slot, &d) in masks.iter_mut().zip(digits.iter()) {
            let a = free.trailing_zeros();
            free &= free - 1;
            let mut rest = free;
            for _ in 0..d {
                rest &= rest - 1;
            }
            let b = rest.trailing_zeros();
            free &= !(1u64 << b);
            *slot = (1u64 << a) | (1u64 << b);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Pairing> + '_ {
        (0..self.total).map(|i| self.unrank(i))
    }
}

/// One element of the symmetry group: coordinate `m` moves to position
/// `coord_perm[m]` with its values renamed by `value_perms[m]`, and colors
/// are renamed by `color_perm`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symmetry {
    pub coord_perm: Vec<usize>,
    pub value_perms: Vec<Vec<u32>>,
    pub color_perm: Vec<u32>,
}

fn shuffled(n: usize, rng: &mut impl Rng) -> Vec<u32> {
    let mut v: Vec<u32> = (0..n as u32).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
    v
}

impl Symmetry {
    pub fn identity(dims: &Dims, n_colors: u32) -> Self {
        Symmetry {
            coord_perm: (0..dims.arity()).collect(),
            value_perms: dims.ks().iter().map(|&k| (0..k).collect()).collect(),
            color_perm: (0..n_colors).collect(),
        }
    }

    pub fn random(dims: &Dims, n_colors: u32, rng: &mut impl Rng) -> Self {
        let ks = dims.ks();
        let mut coord_perm: Vec<usize> = (0..ks.len()).collect();
        // shuffle within each class of equal side length
        let sizes: BTreeSet<u32> = ks.iter().copied().collect();
        for k in sizes {
            let slots: Vec<usize> = (0..ks.len()).filter(|&m| ks[m] == k).collect();
            let order = shuffled(slots.len(), rng);
            for (i, &m) in slots.iter().enumerate() {
                coord_perm[m] = slots[order[i] as usize];
            }
        }
        Symmetry {
            coord_perm,
            value_perms: ks.iter().map(|&k| shuffled(k as usize, rng)).collect(),
            color_perm: shuffled(n_colors as usize, rng),
        }
    }

    pub fn apply_tuple(&self, t: &[u32]) -> Vec<u32> {
        let mut out = vec![0u32; t.len()];
        for (m, &v) in t.iter().enumerate() {
            out[self.coord_perm[m]] = self.value_perms[m][v as usize];
        }
        out
    }

    pub fn apply_colors(&self, s: &BTreeSet<u32>) -> BTreeSet<u32> {
        s.iter().map(|&c| self.color_perm[c as usize]).collect()
    }

    pub fn apply(&self, psi: &PsiTable) -> Result<PsiTable> {
        let dims = psi.dims();
        let ks = dims.ks();
        if self.coord_perm.len() != ks.len()
            || self
                .coord_perm
                .iter()
                .enumerate()
                .any(|(m, &p)| ks[p] != ks[m])
            || self.color_perm.len() != psi.n_colors() as usize
        {
            return Err(Error::InvalidArgument(
                "symmetry does not fit the table".into(),
            ));
        }
        let mut cells = vec![None; dims.cells()];
        for (cell, v) in psi.cells().iter().enumerate() {
            let image = dims.encode(&self.apply_tuple(&dims.decode(cell)));
            cells[image] = v.map(|c| self.color_perm[c as usize]);
        }
        PsiTable::new(dims.clone(), psi.n_colors(), cells)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// The geometric part of the symmetry group as cell maps: `sources[g][c]` is
/// the cell that element `g` moves onto cell `c`.
#[derive(Debug, Clone)]
pub struct SymmetryGroup {
    dims: Dims,
    sources: Vec<Vec<usize>>,
}

impl SymmetryGroup {
    pub fn new(dims: &Dims) -> Result<Self> {
        let ks = dims.ks();
        let mut size: u128 = 1;
        for &k in ks {
            size = size.saturating_mul((1..=u128::from(k)).product());
        }
        let mut classes: BTreeMap<u32, usize> = BTreeMap::new();
        for &k in ks {
            *classes.entry(k).or_default() += 1;
        }
        for &c in classes.values() {
            size = size.saturating_mul((1..=c as u128).product());
        }
        if size > MAX_GROUP as u128 {
            return Err(Error::Budget {
                what: "symmetry group size",
                requested: size,
                cap: MAX_GROUP as u128,
            });
        }
        let coord_perms: Vec<Vec<usize>> = permutations(ks.len())
            .into_iter()
            .filter(|p| p.iter().enumerate().all(|(m, &q)| ks[q] == ks[m]))
            .collect();
        let value_perms: Vec<Vec<Vec<usize>>> =
            ks.iter().map(|&k| permutations(k as usize)).collect();
        let mut sources = Vec::with_capacity(size as usize);
        let mut idx = vec![0usize; ks.len()];
        for cp in &coord_perms {
            loop {
                let mut src = vec![0usize; dims.cells()];
                for cell in 0..dims.cells() {
                    let t = dims.decode(cell);
                    let mut image = vec![0u32; t.len()];
                    for m in 0..t.len() {
                        image[cp[m]] = value_perms[m][idx[m]][t[m] as usize] as u32;
                    }
                    src[dims.encode(&image)] = cell;
                }
                sources.push(src);
                let mut m = ks.len();
                let mut done = true;
                while m > 0 {
                    m -= 1;
                    idx[m] += 1;
                    if idx[m] < value_perms[m].len() {
                        done = false;
                        break;
                    }
                    idx[m] = 0;
                }
                if done {
                    break;
                }
            }
        }
        Ok(SymmetryGroup {
            dims: dims.clone(),
            sources,
        })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Encoding of `cells` after element `g`, colors renamed by first
    /// appearance: undefined is 0, the `j`-th color to appear is `j + 1`.
    fn encode_with(&self, g: usize, cells: &[Option<u32>], rename: &mut [u32]) -> Vec<u32> {
        rename.iter_mut().for_each(|r| *r = 0);
        let mut next = 1;
        self.sources[g]
            .iter()
            .map(|&src| match cells[src] {
                None => 0,
                Some(c) => {
                    if rename[c as usize] == 0 {
                        rename[c as usize] = next;
                        next += 1;
                    }
                    rename[c as usize]
                }
            })
            .collect()
    }

    /// True when no group element gives a smaller encoding than `cells`
    /// already has (which must be in first-appearance form).
    fn is_minimal(&self, cells: &[Option<u32>], n_colors: u32) -> bool {
        let own: Vec<u32> = cells.iter().map(|v| v.map_or(0, |c| c + 1)).collect();
        let mut rename = vec![0u32; n_colors as usize];
        for g in 0..self.sources.len() {
            rename.iter_mut().for_each(|r| *r = 0);
            let mut next = 1;
            for (pos, &src) in self.sources[g].iter().enumerate() {
                let v = match cells[src] {
                    None => 0,
                    Some(c) => {
                        if rename[c as usize] == 0 {
                            rename[c as usize] = next;
                            next += 1;
                        }
                        rename[c as usize]
                    }
                };
                if v < own[pos] {
                    return false;
                }
                if v > own[pos] {
                    break;
                }
            }
        }
        true
    }
}

/// Least representative of a table's orbit, with the color renaming and
/// geometric move that produce it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CanonicalForm {
    pub table: PsiTable,
    pub encoding: Vec<u32>,
}

pub fn canonicalize_with(group: &SymmetryGroup, psi: &PsiTable) -> Result<CanonicalForm> {
    if group.dims != *psi.dims() {
        return Err(Error::InvalidArgument("group built for other dims".into()));
    }
    let mut rename = vec![0u32; psi.n_colors() as usize];
    let best = (0..group.len())
        .map(|g| group.encode_with(g, psi.cells(), &mut rename))
        .min()
        .expect("group contains the identity");
    let cells = best.iter().map(|&v| v.checked_sub(1)).collect();
    let table = PsiTable::new(psi.dims().clone(), psi.n_colors(), cells)?;
    Ok(CanonicalForm {
        table,
        encoding: best,
    })
}

pub fn canonicalize(psi: &PsiTable) -> Result<CanonicalForm> {
    canonicalize_with(&SymmetryGroup::new(psi.dims())?, psi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableConstraints {
    pub total: bool,
    pub min_fiber: usize,
    pub max_fiber: Option<usize>,
}

impl Default for TableConstraints {
    fn default() -> Self {
        TableConstraints {
            total: false,
            min_fiber: 1,
            max_fiber: None,
        }
    }
}

impl TableConstraints {
    pub fn no_singleton(self) -> Self {
        TableConstraints {
            min_fiber: self.min_fiber.max(2),
            ..self
        }
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn stirling2(n: usize, k: usize) -> u128 {
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            row[j] = row[j - 1].saturating_add((j as u128).saturating_mul(row[j]));
        }
        row[0] = 0;
    }
    row[k]
}

/// Number of tables up to color renaming before symmetry and fiber-size
/// pruning: `Σ_d C(cells, d) S(d, N)` over defined-cell counts `d`.
pub fn raw_space(cells: usize, n_colors: u32, total: bool) -> u128 {
    let n = n_colors as usize;
    let lo = if total { cells } else { n };
    (lo..=cells)
        .map(|d| binomial(cells as u128, d as u128).saturating_mul(stirling2(d, n)))
        .fold(0u128, u128::saturating_add)
}

struct PsiEnum<'a> {
    cells: usize,
    n: u32,
    cons: TableConstraints,
    group: Option<&'a SymmetryGroup>,
    assignment: Vec<Option<u32>>,
    sizes: Vec<usize>,
    out: Vec<Vec<Option<u32>>>,
}

impl PsiEnum<'_> {
    fn run(&mut self, pos: usize, used: u32) {
        let remaining = self.cells - pos;
        if (self.n - used) as usize > remaining {
            return;
        }
        if pos == self.cells {
            if self.sizes.iter().all(|&s| s >= self.cons.min_fiber)
                && self
                    .group
                    .is_none_or(|g| g.is_minimal(&self.assignment, self.n))
            {
                self.out.push(self.assignment.clone());
            }
            return;
        }
        if !self.cons.total {
            self.assignment[pos] = None;
            self.run(pos + 1, used);
        }
        let top = if used < self.n { used + 1 } else { used };
        for c in 0..top {
            if self
                .cons
                .max_fiber
                .is_some_and(|m| self.sizes[c as usize] >= m)
            {
                continue;
            }
            self.assignment[pos] = Some(c);
            self.sizes[c as usize] += 1;
            self.run(pos + 1, used.max(c + 1));
            self.sizes[c as usize] -= 1;
        }
        self.assignment[pos] = None;
    }
}

/// Every surjective partial table meeting `cons`, colors in first-appearance
/// order. With `canonical`, one table per symmetry class.
pub fn enumerate_psis(
    dims: &Dims,
    n_colors: u32,
    cons: TableConstraints,
    canonical: bool,
    raw_cap: u128,
) -> Result<Vec<PsiTable>> {
    let cells = dims.cells();
    if n_colors == 0 || n_colors as usize > cells {
        return Err(Error::InvalidArgument(format!(
            "{n_colors} colors cannot be hit from {cells} cells"
        )));
    }
    let raw = raw_space(cells, n_colors, cons.total);
    if raw > raw_cap {
        return Err(Error::Budget {
            what: "raw table space",
            requested: raw,
            cap: raw_cap,
        });
    }
    let group = if canonical {
        Some(SymmetryGroup::new(dims)?)
    } else {
        None
    };
    let mut e = PsiEnum {
        cells,
        n: n_colors,
        cons,
        group: group.as_ref(),
        assignment: vec![None; cells],
        sizes: vec![0; n_colors as usize],
        out: Vec::new(),
    };
    e.run(0, 0);
    e.out
        .into_iter()
        .map(|cells| PsiTable::new(dims.clone(), n_colors, cells))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Every candidate table has a verified (∗)-witness.
    Refuted,
    /// Some candidate has no (∗)-witness. This does not mean a reduction
    /// exists.
    NotRefuted,
    /// Some budget ran out before a verdict was reached.
    Unknown,
}

impl std::str::FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "refuted" => Ok(Verdict::Refuted),
            "not-refuted" => Ok(Verdict::NotRefuted),
            "unknown" => Ok(Verdict::Unknown),
            _ => Err(Error::InvalidArgument(format!("unknown verdict {s:?}"))),
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Refuted => "refuted",
            Verdict::NotRefuted => "not-refuted",
            Verdict::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub mode: EscapeMode,
    pub raw_cap: u128,
    /// Search nodes allowed per candidate table.
    pub node_budget: u64,
    pub workers: usize,
    /// Random singleton tables checked when the singleton branch cannot be
    /// enumerated.
    pub singleton_samples: usize,
    pub seed: u64,
    /// Also run the brute-force bad-collection test on every collection.
    pub cross_check: bool,
    /// Seconds before a sweep stops and reports unknown.
    pub wall_clock_cap: Option<u64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            mode: EscapeMode::Inclusive,
            raw_cap: DEFAULT_RAW_CAP,
            node_budget: 10_000_000,
            workers: 1,
            singleton_samples: 1000,
            seed: 0,
            cross_check: false,
            wall_clock_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub candidate: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BranchSummary {
    pub candidates: u64,
    pub refuted: u64,
    pub sampled: bool,
}

/// Bad-collection statistics over a pairing sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Census {
    pub collections_per_pairing: u64,
    /// `histogram[b]` pairings have exactly `b` bad collections.
    pub histogram: Vec<u64>,
    pub max_bad: u64,
    pub limit: u64,
    pub over_limit: Vec<u64>,
    pub cross_checked: bool,
    pub disagreements: u64,
    pub disagreement_examples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SearchReport {
    pub dims: Vec<u32>,
    pub colors: u32,
    pub mode: EscapeMode,
    pub method: String,
    pub enumerated: u64,
    pub refuted: u64,
    pub failures: Vec<Failure>,
    pub witness_sizes: BTreeMap<usize, u64>,
    pub strategies: BTreeMap<String, u64>,
    pub singleton_branch: BranchSummary,
    pub pairing_branch: BranchSummary,
    pub census: Option<Census>,
    pub verdict: Verdict,
}

/// A report with the run facts that legitimately vary between runs.
#[derive(Debug, Clone, Serialize)]
pub struct SearchRun {
    pub report: SearchReport,
    pub workers: usize,
    pub wall_ms: u128,
}

fn verdict_of(failures: &[Failure]) -> Verdict {
    if failures.iter().any(|f| f.reason == "no-witness") {
        Verdict::NotRefuted
    } else if failures.is_empty() {
        Verdict::Refuted
    } else {
        Verdict::Unknown
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))
}

fn applicable_strategies(dims: &Dims, n: u32) -> Vec<SingletonStrategy> {
    let ks: Vec<u64> = dims.ks().iter().map(|&k| u64::from(k)).collect();
    let n = u64::from(n);
    let cells: u64 = ks.iter().product();
    let max_k = *ks.iter().max().expect("nonempty");
    let mut out = Vec::new();
    if ks.len() == 2 && n > ks[0] + ks[1] - 1 {
        out.push(SingletonStrategy::K1);
    }
    if 2 * n > max_k + cells {
        out.push(SingletonStrategy::TwoSingletons);
    }
    if 2 * n > 2 + cells && 3 * n > 3 * (max_k - 1) + cells {
        out.push(SingletonStrategy::Better);
    }
    out
}

fn strategy_name(s: SingletonStrategy) -> &'static str {
    match s {
        SingletonStrategy::K1 => "k1",
        SingletonStrategy::TwoSingletons => "two-singletons",
        SingletonStrategy::Better => "better",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum CandidateOutcome {
    Strategy(&'static str, usize),
    Search(usize),
    NoWitness,
    Budget,
}

fn evaluate_candidate(
    psi: &PsiTable,
    strategies: &[SingletonStrategy],
    cfg: &SearchConfig,
) -> Result<CandidateOutcome> {
    if psi.has_singleton() {
        for &s in strategies {
            if let Some(w) = singleton_witness(psi, s, cfg.mode)? {
                return Ok(CandidateOutcome::Strategy(strategy_name(s), w.len()));
            }
        }
    }
    match find_star_witness(psi, psi.n_colors() as usize, cfg.mode, cfg.node_budget) {
        WitnessSearch::Found { witness } => {
            if !star_holds_for(psi, &witness.as_set(), cfg.mode)? {
                return Err(Error::Validation("witness failed re-verification".into()));
            }
            Ok(CandidateOutcome::Search(witness.len()))
        }
        WitnessSearch::NoneUpTo { .. } => Ok(CandidateOutcome::NoWitness),
        WitnessSearch::BudgetExhausted { .. } => Ok(CandidateOutcome::Budget),
    }
}

#[derive(Default)]
struct Tally {
    enumerated: u64,
    refuted: u64,
    failures: Vec<(u64, Failure)>,
    witness_sizes: BTreeMap<usize, u64>,
    strategies: BTreeMap<String, u64>,
    singleton: BranchSummary,
    pairing: BranchSummary,
}

impl Tally {
    fn record(&mut self, index: u64, psi: &PsiTable, outcome: CandidateOutcome) {
        self.enumerated += 1;
        let singleton = psi.has_singleton();
        let branch = if singleton {
            &mut self.singleton
        } else {
            &mut self.pairing
        };
        branch.candidates += 1;
        let fail = |reason: &str| Failure {
            candidate: psi
                .to_grid_text()
                .unwrap_or_else(|_| format!("{:?}", psi.cells())),
            reason: reason.into(),
        };
        match outcome {
            CandidateOutcome::Strategy(name, size) => {
                branch.refuted += 1;
                self.refuted += 1;
                *self.strategies.entry(name.into()).or_default() += 1;
                *self.witness_sizes.entry(size).or_default() += 1;
            }
            CandidateOutcome::Search(size) => {
                branch.refuted += 1;
                self.refuted += 1;
                let key = if singleton {
                    "search-fallback"
                } else {
                    "search"
                };
                *self.strategies.entry(key.into()).or_default() += 1;
                *self.witness_sizes.entry(size).or_default() += 1;
            }
            CandidateOutcome::NoWitness => self.failures.push((index, fail("no-witness"))),
            CandidateOutcome::Budget => self.failures.push((index, fail("budget"))),
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.enumerated += other.enumerated;
        self.refuted += other.refuted;
        self.failures.extend(other.failures);
        for (k, v) in other.witness_sizes {
            *self.witness_sizes.entry(k).or_default() += v;
        }
        for (k, v) in other.strategies {
            *self.strategies.entry(k).or_default() += v;
        }
        for (a, b) in [
            (&mut self.singleton, other.singleton),
            (&mut self.pairing, other.pairing),
        ] {
            a.candidates += b.candidates;
            a.refuted += b.refuted;
            a.sampled |= b.sampled;
        }
        self
    }
}

fn shard_ranges(total: u64) -> Vec<(u64, u64)> {
    let step = total.div_ceil(SHARDS).max(1);
    (0..total)
        .step_by(step as usize)
        .map(|lo| (lo, (lo + step).min(total)))
        .collect()
}

/// Runs the case split for `RT¹_N` against the product of `RT¹_{k_m}`.
pub fn verify_nonreduction(dims: &Dims, n_colors: u32, cfg: &SearchConfig) -> Result<SearchRun> {
    let start = Instant::now();
    let cells = dims.cells();
    let raw = raw_space(cells, n_colors, false);
    let report = if n_colors as usize > cells {
        return Err(Error::InvalidArgument(format!(
            "{n_colors} colors cannot be hit from {cells} cells"
        )));
    } else if raw <= cfg.raw_cap {
        exhaustive_case(dims, n_colors, cfg)?
    } else if dims.arity() == 2 && cells <= 64 && 2 * n_colors as usize == cells {
        pairing_case(dims, n_colors, cfg, start)?
    } else {
        return Err(Error::Budget {
            what: "raw table space",
            requested: raw,
            cap: cfg.raw_cap,
        });
    };
    Ok(SearchRun {
        report,
        workers: cfg.workers.max(1),
        wall_ms: start.elapsed().as_millis(),
    })
}

fn exhaustive_case(dims: &Dims, n: u32, cfg: &SearchConfig) -> Result<SearchReport> {
    let tables = enumerate_psis(dims, n, TableConstraints::default(), true, cfg.raw_cap)?;
    let strategies = applicable_strategies(dims, n);
    let tally = pool(cfg.workers)?.install(|| {
        tables
            .par_iter()
            .enumerate()
            .map(|(i, psi)| {
                let outcome = evaluate_candidate(psi, &strategies, cfg)?;
                let mut t = Tally::default();
                t.record(i as u64, psi, outcome);
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let tally = tally.into_iter().fold(Tally::default(), Tally::merge);
    Ok(finish(dims, n, cfg, "canonical-enumeration", tally, None))
}

fn finish(
    dims: &Dims,
    n: u32,
    cfg: &SearchConfig,
    method: &str,
    mut tally: Tally,
    census: Option<Census>,
) -> SearchReport {
    tally.failures.sort_by_key(|(i, _)| *i);
    let failures: Vec<Failure> = tally.failures.into_iter().map(|(_, f)| f).collect();
    let verdict = verdict_of(&failures);
    SearchReport {
        dims: dims.ks().to_vec(),
        colors: n,
        mode: cfg.mode,
        method: method.into(),
        enumerated: tally.enumerated,
        refuted: tally.refuted,
        failures,
        witness_sizes: tally.witness_sizes,
        strategies: tally.strategies,
        singleton_branch: tally.singleton,
        pairing_branch: tally.pairing,
        census,
        verdict,
    }
}

/// Random partial table with at least one singleton, surjective onto `n`.
pub fn random_singleton_table(dims: &Dims, n: u32, rng: &mut impl Rng) -> PsiTable {
    let cells = dims.cells();
    loop {
        let mut assignment: Vec<Option<u32>> = (0..cells)
            .map(|_| {
                if rng.gen_bool(0.15) {
                    None
                } else {
                    Some(rng.gen_range(0..n))
                }
            })
            .collect();
        // put every color somewhere, then force a singleton on color 0
        let order = shuffled(cells, rng);
        for (c, &cell) in order.iter().take(n as usize).enumerate() {
            assignment[cell as usize] = Some(c as u32);
        }
        let keep = order[0] as usize;
        for (cell, v) in assignment.iter_mut().enumerate() {
            if cell != keep && *v == Some(0) {
                *v = Some(rng.gen_range(1..n));
            }
        }
        if let Ok(t) = PsiTable::new(dims.clone(), n, assignment) {
            return t;
        }
    }
}

/// Geometry for bad-collection tests on 2-coordinate grids of at most 64
/// cells.
#[derive(Debug, Clone)]
pub struct BadKernel {
    k0: usize,
    k1: usize,
    box_table: Vec<u64>,
    lines: Vec<u64>,
    rects: Vec<u64>,
}

impl BadKernel {
    pub fn new(dims: &Dims) -> Result<Self> {
        if dims.arity() != 2 || dims.cells() > 64 || dims.ks().iter().sum::<u32>() > 16 {
            return Err(Error::InvalidDims(
                "bad-collection kernel needs two coordinates, at most 64 cells".into(),
            ));
        }
        let (k0, k1) = (dims.ks()[0] as usize, dims.ks()[1] as usize);
        let bit = |r: usize, c: usize| 1u64 << (r * k1 + c);
        let mut box_table = vec![0u64; 1 << (k0 + k1)];
        for rows in 0..1usize << k0 {
            for cols in 0..1usize << k1 {
                let mut m = 0;
                for r in (0..k0).filter(|r| rows >> r & 1 == 1) {
                    for c in (0..k1).filter(|c| cols >> c & 1 == 1) {
                        m |= bit(r, c);
                    }
                }
                box_table[(rows << k1) | cols] = m;
            }
        }
        let mut lines = Vec::new();
        for r in 0..k0 {
            lines.push((0..k1).fold(0, |m, c| m | bit(r, c)));
        }
        for c in 0..k1 {
            lines.push((0..k0).fold(0, |m, r| m | bit(r, c)));
        }
        let mut rects = Vec::new();
        for r0 in 0..k0 {
            for r1 in r0 + 1..k0 {
                for c0 in 0..k1 {
                    for c1 in c0 + 1..k1 {
                        rects.push(bit(r0, c0) | bit(r0, c1) | bit(r1, c0) | bit(r1, c1));
                    }
                }
            }
        }
        Ok(BadKernel {
            k0,
            k1,
            box_table,
            lines,
            rects,
        })
    }

    /// Three-in-a-line or rectangle configuration inside the union.
    #[inline]
    pub fn structural(&self, f: [u64; 3]) -> bool {
        let union = f[0] | f[1] | f[2];
        let meets_all = |m: u64| f.iter().all(|&x| x & m != 0);
        self.lines.iter().any(|&l| meets_all(l))
            || self.rects.iter().any(|&r| r & !union == 0 && meets_all(r))
    }

    /// Some one-cell-per-fiber selection spans a box inside the union.
    #[inline]
    pub fn bruteforce(&self, f: [u64; 3]) -> bool {
        let union = f[0] | f[1] | f[2];
        let k1 = self.k1;
        let rc = |cell: u32| {
            (
                1usize << (cell as usize / k1),
                1usize << (cell as usize % k1),
            )
        };
        let bits = |mut m: u64| {
            std::iter::from_fn(move || {
                (m != 0).then(|| {
                    let b = m.trailing_zeros();
                    m &= m - 1;
                    b
                })
            })
        };
        for a in bits(f[0]) {
            let (ra, ca) = rc(a);
            for b in bits(f[1]) {
                let (rb, cb) = rc(b);
                for c in bits(f[2]) {
                    let (r, cc) = rc(c);
                    let rows = ra | rb | r;
                    let cols = ca | cb | cc;
                    if self.box_table[(rows << k1) | cols] & !union == 0 {
                        return true;
                    }
                }
            }
        }
        false
    }

    pub fn cells(&self) -> usize {
        self.k0 * self.k1
    }
}

/// Census limit: at most `(2k + 8) + (32 - 2k)` bad collections.
pub const BAD_LIMIT_44: u64 = 40;

struct SweepShard {
    tally: Tally,
    histogram: Vec<u64>,
    max_bad: u64,
    over_limit: Vec<u64>,
    disagreements: u64,
    examples: Vec<(u64, String)>,
    timed_out: bool,
}

fn triples(n: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                out.push([a, b, c]);
            }
        }
    }
    out
}

fn sweep_shard(
    en: &PairingEnumerator,
    kernel: &BadKernel,
    range: (u64, u64),
    cfg: &SearchConfig,
    deadline: Option<Instant>,
) -> SweepShard {
    let c = en.dims.cells() / 2;
    let combos = triples(c);
    let mut digits = vec![0u64; c];
    let mut masks = vec![0u64; c];
    let mut shard = SweepShard {
        tally: Tally::default(),
        histogram: vec![0; combos.len() + 1],
        max_bad: 0,
        over_limit: Vec::new(),
        disagreements: 0,
        examples: Vec::new(),
        timed_out: false,
    };
    for index in range.0..range.1 {
        if deadline.is_some_and(|d| Instant::now() > d) {
            shard.timed_out = true;
            shard.tally.enumerated += range.1 - index;
            shard.tally.pairing.candidates += range.1 - index;
            shard.tally.failures.push((
                index,
                Failure {
                    candidate: format!("pairings {index}..{}", range.1),
                    reason: "budget".into(),
                },
            ));
            break;
        }
        en.unrank_masks(index, &mut digits, &mut masks);
        let mut bad = 0u64;
        let mut first_good: Option<[usize; 3]> = None;
        for t in &combos {
            let f = [masks[t[0]], masks[t[1]], masks[t[2]]];
            let s = kernel.structural(f);
            if cfg.cross_check {
                let b = kernel.bruteforce(f);
                if b != s {
                    shard.disagreements += 1;
                    if shard.examples.len() < 10 {
                        shard
                            .examples
                            .push((index, format!("pairing {index} fibers {t:?}")));
                    }
                }
            }
            if s {
                bad += 1;
            } else if first_good.is_none() {
                first_good = Some(*t);
            }
        }
        shard.histogram[bad as usize] += 1;
        shard.max_bad = shard.max_bad.max(bad);
        if bad > BAD_LIMIT_44 && c == 8 {
            shard.over_limit.push(index);
        }
        shard.tally.enumerated += 1;
        shard.tally.pairing.candidates += 1;
        let verified = first_good.and_then(|t| {
            let psi = en.unrank(index).to_table();
            let checker = StarChecker::new(&psi, cfg.mode);
            let s: Vec<u32> = t.iter().map(|&i| i as u32).collect();
            let mut budget = cfg.node_budget;
            matches!(checker.check(&s, &mut budget), StarOutcome::Holds).then_some(s.len())
        });
        match verified {
            Some(size) => {
                shard.tally.refuted += 1;
                shard.tally.pairing.refuted += 1;
                *shard.tally.witness_sizes.entry(size).or_default() += 1;
                *shard
                    .tally
                    .strategies
                    .entry("non-bad-triple".into())
                    .or_default() += 1;
            }
            None => {
                // fall back to the general search before reporting
                let psi = en.unrank(index).to_table();
                let strategies: [SingletonStrategy; 0] = [];
                match evaluate_candidate(&psi, &strategies, cfg) {
                    Ok(CandidateOutcome::Search(size)) => {
                        shard.tally.refuted += 1;
                        shard.tally.pairing.refuted += 1;
                        *shard.tally.witness_sizes.entry(size).or_default() += 1;
                        *shard.tally.strategies.entry("search".into()).or_default() += 1;
                    }
                    Ok(CandidateOutcome::Budget) | Err(_) => {
                        shard.tally.failures.push((
                            index,
                            Failure {
                                candidate: psi.to_grid_text().unwrap_or_default(),
                                reason: "budget".into(),
                            },
                        ));
                    }
                    Ok(_) => shard.tally.failures.push((
                        index,
                        Failure {
                            candidate: psi.to_grid_text().unwrap_or_default(),
                            reason: "no-witness".into(),
                        },
                    )),
                }
            }
        }
    }
    shard
}

fn pairing_sweep(dims: &Dims, cfg: &SearchConfig, start: Instant) -> Result<(Tally, Census)> {
    let en = enumerate_pairings(dims)?;
    let kernel = BadKernel::new(dims)?;
    let deadline = cfg
        .wall_clock_cap
        .map(|s| start + std::time::Duration::from_secs(s));
    let ranges = shard_ranges(en.len());
    let shards: Vec<SweepShard> = pool(cfg.workers)?.install(|| {
        ranges
            .par_iter()
            .map(|&r| sweep_shard(&en, &kernel, r, cfg, deadline))
            .collect()
    });
    let c = dims.cells() / 2;
    let per = (c * (c - 1) * (c.saturating_sub(2)) / 6) as u64;
    let mut census = Census {
        collections_per_pairing: per,
        histogram: vec![0; per as usize + 1],
        max_bad: 0,
        limit: BAD_LIMIT_44,
        over_limit: Vec::new(),
        cross_checked: cfg.cross_check,
        disagreements: 0,
        disagreement_examples: Vec::new(),
    };
    let mut tally = Tally::default();
    let mut examples = Vec::new();
    for s in shards {
        for (h, v) in census.histogram.iter_mut().zip(&s.histogram) {
            *h += v;
        }
        census.max_bad = census.max_bad.max(s.max_bad);
        census.over_limit.extend(s.over_limit);
        census.disagreements += s.disagreements;
        examples.extend(s.examples);
        tally = tally.merge(s.tally);
    }
    examples.sort();
    census.disagreement_examples = examples.into_iter().take(10).map(|(_, e)| e).collect();
    census.over_limit.sort_unstable();
    Ok((tally, census))
}

fn pairing_case(dims: &Dims, n: u32, cfg: &SearchConfig, start: Instant) -> Result<SearchReport> {
    // Without singletons every fiber has at least two cells; N fibers of at
    // least two cells each on 2N cells forces a total table of pairs.
    if 2 * n as usize != dims.cells() {
        return Err(Error::Precondition(format!(
            "pairings cover every table without singletons only when 2N = {}",
            dims.cells()
        )));
    }
    let strategies = applicable_strategies(dims, n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<PsiTable> = (0..cfg.singleton_samples)
        .map(|_| random_singleton_table(dims, n, &mut rng))
        .collect();
    let sampled = pool(cfg.workers)?.install(|| {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, psi)| {
                let outcome = evaluate_candidate(psi, &strategies, cfg)?;
                let mut t = Tally::default();
                t.record(i as u64, psi, outcome);
                t.singleton.sampled = true;
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut singles = sampled.into_iter().fold(Tally::default(), Tally::merge);
    singles.singleton.sampled = true;
    // sampled tables are not part of the exhaustive count
    let singleton_failures: Vec<(u64, Failure)> = singles
        .failures
        .drain(..)
        .map(|(i, mut f)| {
            f.candidate = format!("sampled singleton table {i}:\n{}", f.candidate);
            (u64::MAX - 1_000_000 + i, f)
        })
        .collect();
    let (mut tally, census) = pairing_sweep(dims, cfg, start)?;
    tally.singleton = singles.singleton;
    for (k, v) in singles.strategies {
        *tally.strategies.entry(k).or_default() += v;
    }
    tally.failures.extend(singleton_failures);
    let mut report = finish(dims, n, cfg, "pairing-sweep", tally, Some(census));
    if let Some(c) = &report.census {
        if c.disagreements > 0 || !c.over_limit.is_empty() {
            report.failures.push(Failure {
                candidate: "census".into(),
                reason: format!(
                    "{} oracle disagreements, {} pairings over the limit",
                    c.disagreements,
                    c.over_limit.len()
                ),
            });
            report.verdict = Verdict::NotRefuted;
        }
    }
    Ok(report)
}

/// Bad-collection census over every pairing of `dims`.
pub fn bad_collection_census(dims: &Dims, cfg: &SearchConfig) -> Result<(Census, u64, u128)> {
    let start = Instant::now();
    let (tally, census) = pairing_sweep(dims, cfg, start)?;
    Ok((census, tally.enumerated, start.elapsed().as_millis()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScanRow {
    pub colors: u32,
    pub verdict: Verdict,
    pub enumerated: u64,
    pub failures: usize,
    pub note: Option<String>,
}

/// Known bounds for context. A reduction exists at `reducible_up_to`; each
/// `refuted_from` entry is the least `N` covered by one of the singleton
/// arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Bounds {
    pub reducible_up_to: u32,
    pub refuted_from: BTreeMap<String, u64>,
}

pub fn known_bounds(dims: &Dims) -> Bounds {
    let ks: Vec<u64> = dims.ks().iter().map(|&k| u64::from(k)).collect();
    let cells: u64 = ks.iter().product();
    let max_k = *ks.iter().max().expect("nonempty");
    let mut refuted_from = BTreeMap::new();
    if ks.len() == 2 {
        // N > max{k0 k1 / 2, k0 + k1 - 1}
        refuted_from.insert("k1".into(), (cells / 2).max(ks[0] + ks[1] - 1) + 1);
    }
    refuted_from.insert("two-singletons".into(), (max_k + cells) / 2 + 1);
    let better = ((2 + cells) / 2 + 1).max((3 * (max_k - 1) + cells) / 3 + 1);
    refuted_from.insert("better".into(), better);
    Bounds {
        reducible_up_to: 1 + dims.ks().iter().map(|&k| k - 1).sum::<u32>(),
        refuted_from,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScanReport {
    pub dims: Vec<u32>,
    pub mode: EscapeMode,
    pub rows: Vec<ScanRow>,
    pub least_refuted: Option<u32>,
    pub bounds: Bounds,
}

pub fn threshold_scan(
    dims: &Dims,
    colors: std::ops::RangeInclusive<u32>,
    cfg: &SearchConfig,
) -> Result<ScanReport> {
    let mut rows = Vec::new();
    for n in colors {
        let row = match verify_nonreduction(dims, n, cfg) {
            Ok(run) => ScanRow {
                colors: n,
                verdict: run.report.verdict,
                enumerated: run.report.enumerated,
                failures: run.report.failures.len(),
                note: None,
            },
            Err(e @ Error::Budget { .. }) => ScanRow {
                colors: n,
                verdict: Verdict::Unknown,
                enumerated: 0,
                failures: 0,
                note: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    let least_refuted = rows
        .iter()
        .find(|r| r.verdict == Verdict::Refuted)
        .map(|r| r.colors);
    Ok(ScanReport {
        dims: dims.ks().to_vec(),
        mode: cfg.mode,
        rows,
        least_refuted,
        bounds: known_bounds(dims),
    })
}
