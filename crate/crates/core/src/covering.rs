//! Covering, fibers, transversals and the diagonalization property (∗).
//!
//! A set `X` of grid tuples covers `b` when every coordinate of `b` is matched
//! by some member of `X`, so the covered set of `X` is the box spanned by its
//! coordinate projections. A color set `S` has property (∗) for a backward
//! table `Ψ` when every transversal of `S` (one tuple from each fiber over
//! `S`) covers a tuple that escapes `S`.
//!
//! Covering is monotone: `X ⊆ X'` implies `cover(X) ⊆ cover(X')`. Any set whose
//! image is exactly `S` contains a transversal of `S`, so checking (∗) on
//! transversals alone is complete. The same monotonicity lets the transversal
//! search prune: once a partial transversal's box escapes, every completion
//! escapes too.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};

pub const MAX_CELLS: u64 = 1 << 32;
pub const MAX_SIDE: u32 = 64;

/// Grid side lengths `(k_0, .., k_n)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Dims {
    ks: Vec<u32>,
}

impl TryFrom<Vec<u32>> for Dims {
    type Error = Error;

    fn try_from(ks: Vec<u32>) -> Result<Self> {
        Dims::new(ks)
    }
}

impl From<Dims> for Vec<u32> {
    fn from(d: Dims) -> Self {
        d.ks
    }
}

impl Dims {
    pub fn new(ks: Vec<u32>) -> Result<Self> {
        if ks.is_empty() {
            return Err(Error::InvalidDims("need at least one coordinate".into()));
        }
        if let Some(k) = ks.iter().find(|&&k| !(2..=MAX_SIDE).contains(&k)) {
            return Err(Error::InvalidDims(format!(
                "side {k} outside 2..={MAX_SIDE}"
            )));
        }
        let cells = ks
            .iter()
            .try_fold(1u64, |acc, &k| acc.checked_mul(u64::from(k)))
            .filter(|&c| c <= MAX_CELLS);
        if cells.is_none() {
            return Err(Error::InvalidDims(format!("more than {MAX_CELLS} cells")));
        }
        Ok(Dims { ks })
    }

    pub fn ks(&self) -> &[u32] {
        &self.ks
    }

    pub fn arity(&self) -> usize {
        self.ks.len()
    }

    pub fn cells(&self) -> usize {
        self.ks.iter().map(|&k| k as usize).product()
    }

    pub fn is_grid2(&self) -> bool {
        self.ks.len() == 2
    }

    /// Mixed-radix index; coordinate 0 is most significant.
    pub fn encode(&self, t: &[u32]) -> usize {
        t.iter()
            .zip(&self.ks)
            .fold(0usize, |acc, (&a, &k)| acc * k as usize + a as usize)
    }

    pub fn decode(&self, mut cell: usize) -> Vec<u32> {
        let mut t = vec![0u32; self.ks.len()];
        for (slot, &k) in t.iter_mut().zip(&self.ks).rev() {
            *slot = (cell % k as usize) as u32;
            cell /= k as usize;
        }
        t
    }

    pub fn contains(&self, t: &[u32]) -> bool {
        t.len() == self.ks.len() && t.iter().zip(&self.ks).all(|(&a, &k)| a < k)
    }

    pub fn tuples(&self) -> impl Iterator<Item = Vec<u32>> + '_ {
        (0..self.cells()).map(|c| self.decode(c))
    }
}

pub type GridTuple = Vec<u32>;

/// Whether a covered tuple on which `Ψ` is undefined counts as escaping `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EscapeMode {
    /// Undefined or outside `S`.
    #[default]
    Inclusive,
    /// Defined and outside `S`.
    Strict,
}

/// A candidate backward map `Ψ : ∏k_m ⇀ N`, surjective onto `0..n_colors`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct PsiTable {
    dims: Dims,
    n_colors: u32,
    cells: Vec<Option<u32>>,
    fibers: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    dims: Dims,
    n_colors: u32,
    cells: Vec<Option<u32>>,
}

impl TryFrom<RawTable> for PsiTable {
    type Error = Error;

    fn try_from(raw: RawTable) -> Result<Self> {
        PsiTable::new(raw.dims, raw.n_colors, raw.cells)
    }
}

impl From<PsiTable> for RawTable {
    fn from(t: PsiTable) -> Self {
        RawTable {
            dims: t.dims,
            n_colors: t.n_colors,
            cells: t.cells,
        }
    }
}

impl PsiTable {
    pub fn new(dims: Dims, n_colors: u32, cells: Vec<Option<u32>>) -> Result<Self> {
        if cells.len() != dims.cells() {
            return Err(Error::InvalidTable(format!(
                "{} cells given for a grid of {}",
                cells.len(),
                dims.cells()
            )));
        }
        if n_colors == 0 {
            return Err(Error::InvalidTable("need at least one color".into()));
        }
        let mut fibers = vec![Vec::new(); n_colors as usize];
        for (cell, v) in cells.iter().enumerate() {
            if let Some(v) = *v {
                if v >= n_colors {
                    return Err(Error::InvalidTable(format!(
                        "color {v} not below {n_colors}"
                    )));
                }
                fibers[v as usize].push(cell);
            }
        }
        if let Some(missing) = fibers.iter().position(Vec::is_empty) {
            return Err(Error::InvalidTable(format!(
                "not surjective: color {missing} has empty fiber"
            )));
        }
        Ok(PsiTable {
            dims,
            n_colors,
            cells,
            fibers,
        })
    }

    pub fn from_fn(dims: Dims, n_colors: u32, f: impl Fn(&[u32]) -> Option<u32>) -> Result<Self> {
        let cells = dims.tuples().map(|t| f(&t)).collect();
        PsiTable::new(dims, n_colors, cells)
    }

    /// Parses the grid text format: one row per first coordinate, entries
    /// separated by whitespace, `.` for undefined. Blank lines and `#` comments
    /// are ignored. The color count defaults to one more than the largest entry.
    pub fn from_grid_text(text: &str, n_colors: Option<u32>) -> Result<Self> {
        let mut rows: Vec<Vec<Option<u32>>> = Vec::new();
        let mut width = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| match tok {
                    "." => Ok(None),
                    _ => tok
                        .parse::<u32>()
                        .map(Some)
                        .map_err(|e| parse_err(line_no, format!("bad entry {tok:?}: {e}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(parse_err(
                        line_no,
                        format!("row has {} entries, expected {w}", row.len()),
                    ))
                }
                _ => {}
            }
            rows.push(row);
        }
        let width = width.ok_or_else(|| parse_err(1, "empty grid"))?;
        let dims = Dims::new(vec![rows.len() as u32, width as u32])
            .map_err(|e| parse_err(1, e.to_string()))?;
        let max = rows.iter().flatten().flatten().max().copied();
        let n = match (n_colors, max) {
            (Some(n), Some(m)) if m >= n => {
                return Err(Error::InvalidTable(format!(
                    "entry {m} is not below the color count {n}"
                )))
            }
            (Some(n), _) => n,
            (None, Some(m)) => m + 1,
            (None, None) => return Err(Error::InvalidTable("no defined entries".into())),
        };
        PsiTable::new(dims, n, rows.into_iter().flatten().collect())
    }

    /// Inverse of [`PsiTable::from_grid_text`] for two-coordinate tables.
    pub fn to_grid_text(&self) -> Result<String> {
        if !self.dims.is_grid2() {
            return Err(Error::InvalidDims("grid text needs two coordinates".into()));
        }
        let k1 = self.dims.ks()[1] as usize;
        let mut out = String::new();
        for row in self.cells.chunks(k1) {
            let parts: Vec<String> = row
                .iter()
                .map(|v| v.map_or_else(|| ".".to_string(), |v| v.to_string()))
                .collect();
            writeln!(out, "{}", parts.join(" ")).expect("string write");
        }
        Ok(out)
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn n_colors(&self) -> u32 {
        self.n_colors
    }

    pub fn cells(&self) -> &[Option<u32>] {
        &self.cells
    }

    pub fn value(&self, cell: usize) -> Option<u32> {
        self.cells[cell]
    }

    pub fn get(&self, t: &[u32]) -> Option<u32> {
        if !self.dims.contains(t) {
            return None;
        }
        self.cells[self.dims.encode(t)]
    }

    pub fn fiber(&self, color: u32) -> &[usize] {
        &self.fibers[color as usize]
    }

    pub fn fibers(&self) -> &[Vec<usize>] {
        &self.fibers
    }

    pub fn fiber_tuples(&self, color: u32) -> Vec<GridTuple> {
        self.fiber(color)
            .iter()
            .map(|&c| self.dims.decode(c))
            .collect()
    }

    /// Colors whose fiber is a single cell.
    pub fn singleton_colors(&self) -> Vec<u32> {
        (0..self.n_colors)
            .filter(|&i| self.fibers[i as usize].len() == 1)
            .collect()
    }

    pub fn has_singleton(&self) -> bool {
        self.fibers.iter().any(|f| f.len() == 1)
    }

    pub fn is_total(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    /// Applies a color relabeling `perm[old] = new`.
    pub fn relabel(&self, perm: &[u32]) -> Result<PsiTable> {
        let cells = self
            .cells
            .iter()
            .map(|v| v.map(|v| perm[v as usize]))
            .collect();
        PsiTable::new(self.dims.clone(), self.n_colors, cells)
    }
}

pub fn covered_set(x: &[GridTuple], dims: &Dims) -> Result<BTreeSet<GridTuple>> {
    if let Some(bad) = x.iter().find(|t| !dims.contains(t)) {
        return Err(Error::InvalidArgument(format!(
            "{bad:?} is not in the grid"
        )));
    }
    let mut out = BTreeSet::new();
    if x.is_empty() {
        return Ok(out);
    }
    let projections: Vec<Vec<u32>> = (0..dims.arity())
        .map(|m| {
            x.iter()
                .map(|t| t[m])
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .collect();
    let mut idx = vec![0usize; projections.len()];
    loop {
        out.insert(idx.iter().zip(&projections).map(|(&i, p)| p[i]).collect());
        let mut m = projections.len();
        loop {
            if m == 0 {
                return Ok(out);
            }
            m -= 1;
            idx[m] += 1;
            if idx[m] < projections[m].len() {
                break;
            }
            idx[m] = 0;
        }
    }
}

/// Lexicographic enumeration of one-tuple-per-fiber selections over `S`.
pub struct Transversals<'a> {
    psi: &'a PsiTable,
    colors: Vec<u32>,
    idx: Vec<usize>,
    done: bool,
}

impl Iterator for Transversals<'_> {
    type Item = Vec<GridTuple>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self
            .colors
            .iter()
            .zip(&self.idx)
            .map(|(&c, &i)| self.psi.dims.decode(self.psi.fiber(c)[i]))
            .collect();
        let mut m = self.colors.len();
        loop {
            if m == 0 {
                self.done = true;
                break;
            }
            m -= 1;
            self.idx[m] += 1;
            if self.idx[m] < self.psi.fiber(self.colors[m]).len() {
                break;
            }
            self.idx[m] = 0;
        }
        Some(item)
    }
}

pub fn transversals<'a>(psi: &'a PsiTable, s: &BTreeSet<u32>) -> Result<Transversals<'a>> {
    if let Some(&c) = s.iter().find(|&&c| c >= psi.n_colors) {
        return Err(Error::InvalidArgument(format!("color {c} not in table")));
    }
    Ok(Transversals {
        psi,
        colors: s.iter().copied().collect(),
        idx: vec![0; s.len()],
        done: false,
    })
}

/// Nonempty proper color set with property (∗).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StarWitness {
    colors: Vec<u32>,
}

impl StarWitness {
    pub fn new(colors: BTreeSet<u32>, n_colors: u32) -> Result<Self> {
        if colors.is_empty() || colors.len() >= n_colors as usize {
            return Err(Error::InvalidArgument(format!(
                "witness must be a nonempty proper subset of {n_colors} colors"
            )));
        }
        if colors.iter().any(|&c| c >= n_colors) {
            return Err(Error::InvalidArgument("witness color out of range".into()));
        }
        Ok(StarWitness {
            colors: colors.into_iter().collect(),
        })
    }

    pub fn colors(&self) -> &[u32] {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn as_set(&self) -> BTreeSet<u32> {
        self.colors.iter().copied().collect()
    }
}

/// Outcome of checking (∗) for one color set under a node budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StarOutcome {
    Holds,
    /// A transversal (as cells) whose covered box stays inside `S`.
    Fails(Vec<usize>),
    BudgetExhausted,
}

/// Box masks for two-coordinate grids with at most 64 cells.
#[derive(Debug, Clone)]
struct Grid2 {
    k1: u32,
    box_table: Vec<u64>,
}

impl Grid2 {
    fn new(dims: &Dims) -> Option<Grid2> {
        if !dims.is_grid2() || dims.cells() > 64 {
            return None;
        }
        let (k0, k1) = (dims.ks()[0], dims.ks()[1]);
        if k0 + k1 > 16 {
            return None;
        }
        let mut box_table = vec![0u64; 1 << (k0 + k1)];
        for rows in 0u64..(1 << k0) {
            for cols in 0u64..(1 << k1) {
                let mut mask = 0u64;
                for r in 0..k0 {
                    if rows >> r & 1 == 1 {
                        mask |= cols << (r * k1);
                    }
                }
                box_table[((rows << k1) | cols) as usize] = mask;
            }
        }
        Some(Grid2 { k1, box_table })
    }

    #[inline]
    fn box_of(&self, rows: u64, cols: u64) -> u64 {
        self.box_table[((rows << self.k1) | cols) as usize]
    }

    #[inline]
    fn row_col(&self, cell: usize) -> (u64, u64) {
        let k1 = self.k1 as usize;
        (1u64 << (cell / k1), 1u64 << (cell % k1))
    }
}

/// Repeated (∗) queries against one table.
#[derive(Debug, Clone)]
pub struct StarChecker<'a> {
    psi: &'a PsiTable,
    mode: EscapeMode,
    grid2: Option<Grid2>,
    fiber_masks: Vec<u64>,
    undefined_mask: u64,
}

impl<'a> StarChecker<'a> {
    pub fn new(psi: &'a PsiTable, mode: EscapeMode) -> Self {
        let grid2 = Grid2::new(psi.dims());
        let (fiber_masks, undefined_mask) = if grid2.is_some() {
            let fm = psi
                .fibers()
                .iter()
                .map(|f| f.iter().fold(0u64, |m, &c| m | 1 << c))
                .collect();
            let um = psi
                .cells()
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_none())
                .fold(0u64, |m, (c, _)| m | 1 << c);
            (fm, um)
        } else {
            (Vec::new(), 0)
        };
        StarChecker {
            psi,
            mode,
            grid2,
            fiber_masks,
            undefined_mask,
        }
    }

    pub fn psi(&self) -> &PsiTable {
        self.psi
    }

    pub fn mode(&self) -> EscapeMode {
        self.mode
    }

    /// Checks (∗) for `s` (sorted, distinct, in range), charging one unit of
    /// `budget` per search node.
    pub fn check(&self, s: &[u32], budget: &mut u64) -> StarOutcome {
        let mut in_s = vec![false; self.psi.n_colors() as usize];
        for &c in s {
            in_s[c as usize] = true;
        }
        let mut chosen = Vec::with_capacity(s.len());
        let found = match &self.grid2 {
            Some(g) => {
                let mut allowed = s
                    .iter()
                    .fold(0u64, |m, &c| m | self.fiber_masks[c as usize]);
                if self.mode == EscapeMode::Strict {
                    allowed |= self.undefined_mask;
                }
                self.dfs_grid2(g, s, allowed, 0, 0, &mut chosen, budget)
            }
            None => {
                let masks = vec![0u64; self.psi.dims().arity()];
                self.dfs_general(s, &in_s, &masks, &mut chosen, budget)
            }
        };
        match found {
            Some(true) => StarOutcome::Fails(chosen),
            Some(false) => StarOutcome::Holds,
            None => StarOutcome::BudgetExhausted,
        }
    }

    pub fn holds(&self, s: &[u32]) -> bool {
        matches!(self.check(s, &mut u64::MAX.clone()), StarOutcome::Holds)
    }

    // Some(true): found a non-escaping transversal (left in `chosen`).
    // Some(false): every transversal escapes. None: out of budget.
    #[allow(clippy::too_many_arguments)]
    fn dfs_grid2(
        &self,
        g: &Grid2,
        s: &[u32],
        allowed: u64,
        rows: u64,
        cols: u64,
        chosen: &mut Vec<usize>,
        budget: &mut u64,
    ) -> Option<bool> {
        let depth = chosen.len();
        if depth == s.len() {
            return Some(true);
        }
        for &cell in self.psi.fiber(s[depth]) {
            if *budget == 0 {
                return None;
            }
            *budget -= 1;
            let (r, c) = g.row_col(cell);
            let (nr, nc) = (rows | r, cols | c);
            if g.box_of(nr, nc) & !allowed != 0 {
                continue;
            }
            chosen.push(cell);
            match self.dfs_grid2(g, s, allowed, nr, nc, chosen, budget) {
                Some(false) => {
                    chosen.pop();
                }
                other => return other,
            }
        }
        Some(false)
    }

    fn box_escapes(&self, in_s: &[bool], masks: &[u64]) -> bool {
        let dims = self.psi.dims();
        let sets: Vec<Vec<u32>> = masks
            .iter()
            .map(|&m| (0..64u32).filter(|b| m >> b & 1 == 1).collect())
            .collect();
        if sets.iter().any(Vec::is_empty) {
            return false;
        }
        let mut idx = vec![0usize; sets.len()];
        let mut t = vec![0u32; sets.len()];
        loop {
            for (m, slot) in t.iter_mut().enumerate() {
                *slot = sets[m][idx[m]];
            }
            let escapes = match self.psi.value(dims.encode(&t)) {
                None => self.mode == EscapeMode::Inclusive,
                Some(v) => !in_s[v as usize],
            };
            if escapes {
                return true;
            }
            let mut m = sets.len();
            loop {
                if m == 0 {
                    return false;
                }
                m -= 1;
                idx[m] += 1;
                if idx[m] < sets[m].len() {
                    break;
                }
                idx[m] = 0;
            }
        }
    }

    fn dfs_general(
        &self,
        s: &[u32],
        in_s: &[bool],
        masks: &[u64],
        chosen: &mut Vec<usize>,
        budget: &mut u64,
    ) -> Option<bool> {
        let depth = chosen.len();
        if depth == s.len() {
            return Some(true);
        }
        let dims = self.psi.dims();
        for &cell in self.psi.fiber(s[depth]) {
            if *budget == 0 {
                return None;
            }
            *budget -= 1;
            let t = dims.decode(cell);
            let next: Vec<u64> = masks.iter().zip(&t).map(|(&m, &a)| m | 1 << a).collect();
            if self.box_escapes(in_s, &next) {
                continue;
            }
            chosen.push(cell);
            match self.dfs_general(s, in_s, &next, chosen, budget) {
                Some(false) => {
                    chosen.pop();
                }
                other => return other,
            }
        }
        Some(false)
    }
}

fn validate_color_set(psi: &PsiTable, s: &BTreeSet<u32>) -> Result<Vec<u32>> {
    if let Some(&c) = s.iter().find(|&&c| c >= psi.n_colors()) {
        return Err(Error::InvalidArgument(format!("color {c} not in table")));
    }
    Ok(s.iter().copied().collect())
}

/// Property (∗) for `s`. Empty or full color sets never qualify.
pub fn star_holds_for(psi: &PsiTable, s: &BTreeSet<u32>, mode: EscapeMode) -> Result<bool> {
    let colors = validate_color_set(psi, s)?;
    if colors.is_empty() || colors.len() >= psi.n_colors() as usize {
        return Ok(false);
    }
    Ok(StarChecker::new(psi, mode).holds(&colors))
}

/// Result of [`find_star_witness`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum WitnessSearch {
    Found { witness: StarWitness },
    NoneUpTo { max_size: usize },
    BudgetExhausted { at_size: usize },
}

impl WitnessSearch {
    pub fn witness(&self) -> Option<&StarWitness> {
        match self {
            WitnessSearch::Found { witness } => Some(witness),
            _ => None,
        }
    }
}

/// Advances `idx` to the next `r`-combination of `0..n` in lex order.
pub(crate) fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let r = idx.len();
    let mut i = r;
    while i > 0 {
        i -= 1;
        if idx[i] < n - r + i {
            idx[i] += 1;
            for j in i + 1..r {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

impl StarChecker<'_> {
    /// Least witness by size then lexicographic order, up to `max_size`.
    pub fn find_witness(&self, max_size: usize, budget: &mut u64) -> WitnessSearch {
        let n = self.psi.n_colors() as usize;
        let top = max_size.min(n.saturating_sub(1));
        for size in 1..=top {
            let mut idx: Vec<usize> = (0..size).collect();
            loop {
                let s: Vec<u32> = idx.iter().map(|&i| i as u32).collect();
                match self.check(&s, budget) {
                    StarOutcome::Holds => {
                        let witness = StarWitness { colors: s };
                        return WitnessSearch::Found { witness };
                    }
                    StarOutcome::BudgetExhausted => {
                        return WitnessSearch::BudgetExhausted { at_size: size }
                    }
                    StarOutcome::Fails(_) => {}
                }
                if !next_combination(&mut idx, n) {
                    break;
                }
            }
        }
        WitnessSearch::NoneUpTo { max_size }
    }
}

pub fn find_star_witness(
    psi: &PsiTable,
    max_size: usize,
    mode: EscapeMode,
    budget: u64,
) -> WitnessSearch {
    let mut budget = budget;
    StarChecker::new(psi, mode).find_witness(max_size, &mut budget)
}

fn three_colors(psi: &PsiTable, three: &BTreeSet<u32>) -> Result<Vec<u32>> {
    let v = validate_color_set(psi, three)?;
    if v.len() != 3 {
        return Err(Error::InvalidArgument("need exactly three colors".into()));
    }
    Ok(v)
}

/// Some transversal of the three fibers covers nothing outside their union.
pub fn is_bad_bruteforce(psi: &PsiTable, three: &BTreeSet<u32>) -> Result<bool> {
    let v = three_colors(psi, three)?;
    if !psi.dims().is_grid2() {
        return Err(Error::InvalidDims(
            "bad collections are defined on 2-coordinate grids".into(),
        ));
    }
    let checker = StarChecker::new(psi, EscapeMode::Inclusive);
    Ok(matches!(
        checker.check(&v, &mut u64::MAX.clone()),
        StarOutcome::Fails(_)
    ))
}

/// The union of the three fibers contains three cells in one line, one per
/// fiber, or a rectangle meeting all three fibers.
pub fn is_bad_structural(psi: &PsiTable, three: &BTreeSet<u32>) -> Result<bool> {
    let v = three_colors(psi, three)?;
    if !psi.dims().is_grid2() {
        return Err(Error::InvalidDims(
            "bad collections are defined on 2-coordinate grids".into(),
        ));
    }
    let (k0, k1) = (psi.dims().ks()[0] as usize, psi.dims().ks()[1] as usize);
    let label = |a: usize, b: usize| -> Option<usize> {
        psi.value(a * k1 + b)
            .and_then(|c| v.iter().position(|&x| x == c))
    };
    let distinct3 = |x: Option<usize>, y: Option<usize>, z: Option<usize>| match (x, y, z) {
        (Some(x), Some(y), Some(z)) => x != y && y != z && x != z,
        _ => false,
    };
    for a in 0..k0 {
        for b0 in 0..k1 {
            for b1 in b0 + 1..k1 {
                for b2 in b1 + 1..k1 {
                    if distinct3(label(a, b0), label(a, b1), label(a, b2)) {
                        return Ok(true);
                    }
                }
            }
        }
    }
    for b in 0..k1 {
        for a0 in 0..k0 {
            for a1 in a0 + 1..k0 {
                for a2 in a1 + 1..k0 {
                    if distinct3(label(a0, b), label(a1, b), label(a2, b)) {
                        return Ok(true);
                    }
                }
            }
        }
    }
    for a0 in 0..k0 {
        for a1 in a0 + 1..k0 {
            for b0 in 0..k1 {
                for b1 in b0 + 1..k1 {
                    let corners = [label(a0, b0), label(a0, b1), label(a1, b0), label(a1, b1)];
                    if corners.iter().all(Option::is_some) {
                        let hit: BTreeSet<usize> = corners.iter().flatten().copied().collect();
                        if hit.len() == 3 {
                            return Ok(true);
                        }
                    }
                }
            }
        }
    }
    Ok(false)
}

/// Which upper-bound construction [`singleton_witness`] follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingletonStrategy {
    /// Two coordinates: a singleton plus a fiber sharing no row or column
    /// with it. Needs `N > k_0 + k_1 - 1`.
    K1,
    /// Two singletons that differ in at least two coordinates. Needs
    /// `N > (max k + ∏k)/2`.
    TwoSingletons,
    /// Two singletons as above, or else a small fiber avoiding the line of
    /// singletons together with one of them. Needs
    /// `N > max{(2 + ∏k)/2, max k - 1 + ∏k/3}`.
    Better,
}

impl std::str::FromStr for SingletonStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k1" => Ok(SingletonStrategy::K1),
            "two-singletons" => Ok(SingletonStrategy::TwoSingletons),
            "better" => Ok(SingletonStrategy::Better),
            _ => Err(Error::InvalidArgument(format!("unknown strategy {s:?}"))),
        }
    }
}

fn verified(psi: &PsiTable, s: BTreeSet<u32>, mode: EscapeMode) -> Result<Option<StarWitness>> {
    if star_holds_for(psi, &s, mode)? {
        Ok(Some(StarWitness::new(s, psi.n_colors())?))
    } else {
        Ok(None)
    }
}

fn two_singletons(psi: &PsiTable, mode: EscapeMode) -> Result<Option<StarWitness>> {
    let singles = psi.singleton_colors();
    let dims = psi.dims();
    for (i, &a) in singles.iter().enumerate() {
        let ta = dims.decode(psi.fiber(a)[0]);
        for &b in &singles[i + 1..] {
            let tb = dims.decode(psi.fiber(b)[0]);
            let differ = ta.iter().zip(&tb).filter(|(x, y)| x != y).count();
            if differ >= 2 {
                if let Some(w) = verified(psi, BTreeSet::from([a, b]), mode)? {
                    return Ok(Some(w));
                }
            }
        }
    }
    Ok(None)
}

/// Builds the two-element witness of the chosen upper-bound argument and
/// verifies it with [`star_holds_for`] before returning it.
pub fn singleton_witness(
    psi: &PsiTable,
    strategy: SingletonStrategy,
    mode: EscapeMode,
) -> Result<Option<StarWitness>> {
    let dims = psi.dims();
    let n = u64::from(psi.n_colors());
    let ks: Vec<u64> = dims.ks().iter().map(|&k| u64::from(k)).collect();
    let cells = dims.cells() as u64;
    let max_k = *ks.iter().max().expect("nonempty dims");
    match strategy {
        SingletonStrategy::K1 => {
            if ks.len() != 2 {
                return Err(Error::Precondition(
                    "k1 strategy needs two coordinates".into(),
                ));
            }
            if n < ks[0] + ks[1] {
                return Err(Error::Precondition(format!(
                    "k1 strategy needs N > k0 + k1 - 1 = {}",
                    ks[0] + ks[1] - 1
                )));
            }
            for a in psi.singleton_colors() {
                let t = dims.decode(psi.fiber(a)[0]);
                for g in 0..psi.n_colors() {
                    if g == a {
                        continue;
                    }
                    let disjoint = psi
                        .fiber_tuples(g)
                        .iter()
                        .all(|u| u[0] != t[0] && u[1] != t[1]);
                    if disjoint {
                        if let Some(w) = verified(psi, BTreeSet::from([a, g]), mode)? {
                            return Ok(Some(w));
                        }
                    }
                }
            }
            Ok(None)
        }
        SingletonStrategy::TwoSingletons => {
            if 2 * n <= max_k + cells {
                return Err(Error::Precondition(format!(
                    "two-singletons strategy needs N > ({max_k} + {cells})/2"
                )));
            }
            two_singletons(psi, mode)
        }
        SingletonStrategy::Better => {
            // N > (2 + ∏k)/2 and N > max k - 1 + ∏k/3, in integers.
            if 2 * n <= 2 + cells || 3 * n <= 3 * (max_k - 1) + cells {
                return Err(Error::Precondition(format!(
                    "better strategy needs N > max{{(2+{cells})/2, {} + {cells}/3}}",
                    max_k - 1
                )));
            }
            if let Some(w) = two_singletons(psi, mode)? {
                return Ok(Some(w));
            }
            let singles = psi.singleton_colors();
            if singles.len() < 3 {
                return Ok(None);
            }
            let tuples: Vec<GridTuple> = singles
                .iter()
                .map(|&s| dims.decode(psi.fiber(s)[0]))
                .collect();
            // All singletons lie on one line along some coordinate m.
            let Some(m) = (0..ks.len()).find(|&m| {
                tuples.iter().all(|t| {
                    t.iter()
                        .enumerate()
                        .all(|(j, &v)| j == m || v == tuples[0][j])
                })
            }) else {
                return Ok(None);
            };
            let l = singles.len();
            let on_line = |u: &GridTuple| {
                u.iter()
                    .enumerate()
                    .all(|(j, &v)| j == m || v == tuples[0][j])
            };
            for u in 0..psi.n_colors() {
                let fiber = psi.fiber_tuples(u);
                if fiber.len() >= l || fiber.iter().any(on_line) {
                    continue;
                }
                let used: BTreeSet<u32> = fiber.iter().map(|t| t[m]).collect();
                for (&s, t) in singles.iter().zip(&tuples) {
                    if !used.contains(&t[m]) {
                        if let Some(w) = verified(psi, BTreeSet::from([u, s]), mode)? {
                            return Ok(Some(w));
                        }
                    }
                }
            }
            Ok(None)
        }
    }
}
