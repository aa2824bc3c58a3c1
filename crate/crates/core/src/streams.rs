//! Finite presentations of infinite objects.
//!
//! An [`EvpStream`] is an eventually periodic coloring of the naturals, so the
//! set of symbols occurring infinitely often is exactly the set of symbols on
//! its cycle. A [`StableColoring`] is a pair coloring whose rows are
//! eventually constant step functions: finitely many explicit rows followed by
//! a tail of rows that repeats periodically in the row index. Both classes are
//! closed under the pointwise constructions used by the reductions, and every
//! limit question about them is decidable by inspection.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};

pub(crate) fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub(crate) fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// An eventually periodic sequence `transient · cycle^ω` over `0..alphabet`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawStream")]
pub struct EvpStream {
    transient: Vec<u32>,
    cycle: Vec<u32>,
    alphabet: u32,
}

#[derive(Deserialize)]
struct RawStream {
    transient: Vec<u32>,
    cycle: Vec<u32>,
    alphabet: u32,
}

impl TryFrom<RawStream> for EvpStream {
    type Error = Error;

    fn try_from(raw: RawStream) -> Result<Self> {
        EvpStream::new(raw.transient, raw.cycle, raw.alphabet)
    }
}

impl EvpStream {
    pub fn new(transient: Vec<u32>, cycle: Vec<u32>, alphabet: u32) -> Result<Self> {
        if alphabet == 0 {
            return Err(Error::InvalidStream("alphabet must be positive".into()));
        }
        if cycle.is_empty() {
            return Err(Error::InvalidStream("cycle must be nonempty".into()));
        }
        if let Some(&symbol) = transient.iter().chain(&cycle).find(|&&s| s >= alphabet) {
            return Err(Error::SymbolOutOfRange { symbol, alphabet });
        }
        Ok(EvpStream {
            transient,
            cycle,
            alphabet,
        })
    }

    pub fn constant(symbol: u32, alphabet: u32) -> Result<Self> {
        Self::new(Vec::new(), vec![symbol], alphabet)
    }

    pub fn transient(&self) -> &[u32] {
        &self.transient
    }

    pub fn cycle(&self) -> &[u32] {
        &self.cycle
    }

    pub fn alphabet(&self) -> u32 {
        self.alphabet
    }

    /// Same sequence, declared over a larger alphabet.
    pub fn with_alphabet(&self, alphabet: u32) -> Result<Self> {
        Self::new(self.transient.clone(), self.cycle.clone(), alphabet)
    }

    pub fn eval_at(&self, i: usize) -> u32 {
        if i < self.transient.len() {
            self.transient[i]
        } else {
            self.cycle[(i - self.transient.len()) % self.cycle.len()]
        }
    }

    pub fn infinitely_often(&self) -> BTreeSet<u32> {
        self.cycle.iter().copied().collect()
    }

    pub fn is_eventually_constant(&self) -> bool {
        self.cycle.iter().all(|&s| s == self.cycle[0])
    }

    /// Length of the shortest prefix after which the sequence is periodic with
    /// the stored cycle length.
    pub fn prefix_len(&self) -> usize {
        self.transient.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.transient
            .iter()
            .copied()
            .chain(self.cycle.iter().copied().cycle())
    }

    pub fn default_horizon(&self) -> usize {
        20 * (self.transient.len() + self.cycle.len()) + 200
    }

    pub fn default_window(&self) -> usize {
        2 * self.cycle.len() + 20
    }
}

fn parse_symbols(part: &str) -> Result<Vec<u32>> {
    let part = part.trim();
    if part.is_empty() {
        return Ok(Vec::new());
    }
    part.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u32>()
                .map_err(|e| parse_err(1, format!("bad symbol {tok:?}: {e}")))
        })
        .collect()
}

impl FromStr for EvpStream {
    type Err = Error;

    /// Parses `transient|cycle`; the alphabet is one more than the largest symbol.
    fn from_str(s: &str) -> Result<Self> {
        let (transient, cycle) = s
            .split_once('|')
            .ok_or_else(|| parse_err(1, "stream literal must look like `transient|cycle`"))?;
        let transient = parse_symbols(transient)?;
        let cycle = parse_symbols(cycle)?;
        let alphabet = transient.iter().chain(&cycle).max().map_or(1, |m| m + 1);
        EvpStream::new(transient, cycle, alphabet)
    }
}

impl fmt::Display for EvpStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        write!(f, "{}|{}", join(&self.transient), join(&self.cycle))
    }
}

/// A rule emitting one output symbol per input symbol.
pub trait Transducer {
    fn step(&mut self, input: u32) -> u32;
}

impl<F: FnMut(u32) -> u32> Transducer for F {
    fn step(&mut self, input: u32) -> u32 {
        self(input)
    }
}

/// First `len` outputs of `t` run over `s`.
pub fn transduce<T: Transducer + ?Sized>(s: &EvpStream, t: &mut T, len: usize) -> Vec<u32> {
    s.iter().take(len).map(|a| t.step(a)).collect()
}

/// Runs `t` for `horizon` inputs and returns the symbols seen in the last
/// `window` outputs. This is an empirical stand-in for the infinitely-often
/// set of the output, not an exact computation.
pub fn transduce_summary<T: Transducer + ?Sized>(
    s: &EvpStream,
    t: &mut T,
    horizon: usize,
    window: usize,
) -> Result<BTreeSet<u32>> {
    if window == 0 || window >= horizon {
        return Err(Error::InvalidArgument(format!(
            "need horizon > window > 0, got horizon={horizon} window={window}"
        )));
    }
    let out = transduce(s, t, horizon);
    Ok(out[horizon - window..].iter().copied().collect())
}

/// A sequence that is constant between listed change points and constant after
/// the last one. Before the first listed position it takes the first value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, u32)>", into = "Vec<(usize, u32)>")]
pub struct StepFunction {
    steps: Vec<(usize, u32)>,
}

impl TryFrom<Vec<(usize, u32)>> for StepFunction {
    type Error = Error;

    fn try_from(steps: Vec<(usize, u32)>) -> Result<Self> {
        StepFunction::new(steps)
    }
}

impl From<StepFunction> for Vec<(usize, u32)> {
    fn from(f: StepFunction) -> Self {
        f.steps
    }
}

impl StepFunction {
    pub fn new(steps: Vec<(usize, u32)>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidColoring(
                "step function needs at least one step".into(),
            ));
        }
        if steps.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidColoring(
                "step positions must be strictly increasing".into(),
            ));
        }
        Ok(StepFunction { steps })
    }

    pub fn constant(value: u32) -> Self {
        StepFunction {
            steps: vec![(0, value)],
        }
    }

    /// Takes `before` on positions `< at` and `after` from `at` on.
    pub fn switch_at(before: u32, at: usize, after: u32) -> Self {
        if at == 0 {
            Self::constant(after)
        } else {
            StepFunction {
                steps: vec![(0, before), (at, after)],
            }
            .normalized()
        }
    }

    pub fn steps(&self) -> &[(usize, u32)] {
        &self.steps
    }

    pub fn eval(&self, i: usize) -> u32 {
        match self.steps.partition_point(|&(pos, _)| pos <= i) {
            0 => self.steps[0].1,
            n => self.steps[n - 1].1,
        }
    }

    pub fn limit(&self) -> u32 {
        self.steps[self.steps.len() - 1].1
    }

    /// Position from which the function equals its limit.
    pub fn settles_at(&self) -> usize {
        let n = self.normalized();
        if n.steps.len() == 1 {
            0
        } else {
            n.steps[n.steps.len() - 1].0
        }
    }

    pub fn max_value(&self) -> u32 {
        self.steps.iter().map(|s| s.1).max().unwrap_or(0)
    }

    /// Drops change points that do not change the value.
    pub fn normalized(&self) -> Self {
        let mut steps: Vec<(usize, u32)> = Vec::with_capacity(self.steps.len());
        for &(pos, v) in &self.steps {
            match steps.last() {
                Some(&(_, prev)) if prev == v => {}
                _ => steps.push((pos, v)),
            }
        }
        StepFunction { steps }
    }

    /// Pointwise combination of several step functions.
    pub fn zip_with(parts: &[&StepFunction], f: impl Fn(&[u32]) -> u32) -> Self {
        let mut positions: Vec<usize> = parts
            .iter()
            .flat_map(|p| p.steps.iter().map(|s| s.0))
            .chain(std::iter::once(0))
            .collect();
        positions.sort_unstable();
        positions.dedup();
        let mut vals = vec![0u32; parts.len()];
        let steps = positions
            .into_iter()
            .map(|pos| {
                for (v, p) in vals.iter_mut().zip(parts) {
                    *v = p.eval(pos);
                }
                (pos, f(&vals))
            })
            .collect();
        StepFunction { steps }.normalized()
    }
}

/// A stable coloring of pairs `c(x, y)`, `x < y`, given by explicit rows for
/// `x < rows.len()` and a periodic tail: row `x >= rows.len()` is
/// `tail[x % tail.len()]`. Row `x` is read at `y`, so `c(x, y) = row(x).eval(y)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawColoring", into = "RawColoring")]
pub struct StableColoring {
    k: u32,
    rows: Vec<StepFunction>,
    tail: Vec<StepFunction>,
}

#[derive(Serialize, Deserialize)]
struct RawColoring {
    k: u32,
    rows: Vec<StepFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default_limit: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tail: Option<Vec<StepFunction>>,
}

impl TryFrom<RawColoring> for StableColoring {
    type Error = Error;

    fn try_from(raw: RawColoring) -> Result<Self> {
        let tail = match (raw.default_limit, raw.tail) {
            (Some(d), None) => vec![StepFunction::constant(d)],
            (None, Some(t)) => t,
            _ => {
                return Err(Error::InvalidColoring(
                    "exactly one of `default_limit` and `tail` must be given".into(),
                ))
            }
        };
        StableColoring::new(raw.k, raw.rows, tail)
    }
}

impl From<StableColoring> for RawColoring {
    fn from(c: StableColoring) -> Self {
        let constant_tail = c.tail.len() == 1 && c.tail[0].normalized().steps.len() == 1;
        if constant_tail {
            RawColoring {
                k: c.k,
                rows: c.rows,
                default_limit: Some(c.tail[0].limit()),
                tail: None,
            }
        } else {
            RawColoring {
                k: c.k,
                rows: c.rows,
                default_limit: None,
                tail: Some(c.tail),
            }
        }
    }
}

impl StableColoring {
    pub fn new(k: u32, rows: Vec<StepFunction>, tail: Vec<StepFunction>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidColoring(
                "color count must be positive".into(),
            ));
        }
        if tail.is_empty() {
            return Err(Error::InvalidColoring(
                "tail must have at least one row".into(),
            ));
        }
        if let Some(symbol) = rows
            .iter()
            .chain(&tail)
            .map(StepFunction::max_value)
            .find(|&m| m >= k)
        {
            return Err(Error::SymbolOutOfRange {
                symbol,
                alphabet: k,
            });
        }
        Ok(StableColoring { k, rows, tail })
    }

    /// Explicit rows followed by rows that are constantly `default_limit`.
    pub fn with_default(k: u32, rows: Vec<StepFunction>, default_limit: u32) -> Result<Self> {
        Self::new(k, rows, vec![StepFunction::constant(default_limit)])
    }

    pub fn constant(k: u32, color: u32) -> Result<Self> {
        Self::with_default(k, Vec::new(), color)
    }

    /// Every row equal to `row`: `c(x, y) = row(y)`.
    pub fn column_function(k: u32, row: StepFunction) -> Result<Self> {
        Self::new(k, Vec::new(), vec![row])
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn explicit_rows(&self) -> &[StepFunction] {
        &self.rows
    }

    pub fn tail(&self) -> &[StepFunction] {
        &self.tail
    }

    pub fn explicit_bound(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, x: usize) -> &StepFunction {
        if x < self.rows.len() {
            &self.rows[x]
        } else {
            &self.tail[x % self.tail.len()]
        }
    }

    pub fn eval(&self, x: usize, y: usize) -> u32 {
        debug_assert!(x < y, "pair colorings are read on x < y");
        self.row(x).eval(y)
    }

    pub fn limit_of_row(&self, x: usize) -> u32 {
        self.row(x).limit()
    }

    /// Colors that are the limit of infinitely many rows.
    pub fn tail_limits(&self) -> BTreeSet<u32> {
        self.tail.iter().map(StepFunction::limit).collect()
    }

    /// A `y` from which every row has reached its limit.
    pub fn settles_by(&self) -> usize {
        self.rows
            .iter()
            .chain(&self.tail)
            .map(StepFunction::settles_at)
            .max()
            .unwrap_or(0)
    }

    /// Pointwise combination `f(c_0(x,y), .., c_m(x,y))` of colorings.
    pub fn zip_with(
        parts: &[&StableColoring],
        k: u32,
        f: impl Fn(&[u32]) -> u32,
    ) -> Result<StableColoring> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("nothing to combine".into()));
        }
        let bound = parts.iter().map(|p| p.rows.len()).max().unwrap_or(0);
        let period = parts.iter().fold(1, |acc, p| lcm(acc, p.tail.len()));
        let rows = (0..bound)
            .map(|x| {
                let row_parts: Vec<&StepFunction> = parts.iter().map(|p| p.row(x)).collect();
                StepFunction::zip_with(&row_parts, &f)
            })
            .collect();
        let tail = (0..period)
            .map(|j| {
                let row_parts: Vec<&StepFunction> =
                    parts.iter().map(|p| &p.tail[j % p.tail.len()]).collect();
                StepFunction::zip_with(&row_parts, &f)
            })
            .collect();
        StableColoring::new(k, rows, tail)
    }

    /// True when both colorings agree on every pair `x < y` with `x < rows`
    /// and `y < cols`.
    pub fn agrees_on_window(&self, other: &StableColoring, rows: usize, cols: usize) -> bool {
        (0..rows).all(|x| (x + 1..cols).all(|y| self.eval(x, y) == other.eval(x, y)))
    }
}
