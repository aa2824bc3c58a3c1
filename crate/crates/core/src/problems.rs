//! Problem catalog: instance types with their solution checks, and small
//! solvers that extract solution prefixes from finitely presented instances.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};
use crate::streams::{EvpStream, StableColoring};

/// `0^ω` when `flip` is absent, `0^n 1^ω` when `flip = Some(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct LpoInstance {
    pub flip: Option<usize>,
}

impl LpoInstance {
    pub fn zeros() -> Self {
        LpoInstance { flip: None }
    }

    pub fn flip_at(n: usize) -> Self {
        LpoInstance { flip: Some(n) }
    }

    pub fn value_at(&self, z: usize) -> u32 {
        match self.flip {
            Some(n) if z >= n => 1,
            _ => 0,
        }
    }

    pub fn as_stream(&self) -> EvpStream {
        match self.flip {
            None => EvpStream::new(vec![], vec![0], 2),
            Some(n) => EvpStream::new(vec![0; n], vec![1], 2),
        }
        .expect("binary stream")
    }
}

pub fn lpo_answer(s: &LpoInstance) -> u32 {
    u32::from(s.flip.is_some())
}

/// Choice on the naturals, collapsed to the enumerated set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCn")]
pub struct CnInstance {
    excluded: BTreeSet<u64>,
    universe_bound: u64,
}

#[derive(Deserialize)]
struct RawCn {
    excluded: BTreeSet<u64>,
    universe_bound: u64,
}

impl TryFrom<RawCn> for CnInstance {
    type Error = Error;

    fn try_from(raw: RawCn) -> Result<Self> {
        CnInstance::new(raw.excluded, raw.universe_bound)
    }
}

impl CnInstance {
    pub fn new(excluded: BTreeSet<u64>, universe_bound: u64) -> Result<Self> {
        if (0..=universe_bound).all(|x| excluded.contains(&x)) {
            return Err(Error::Precondition(format!(
                "every x <= {universe_bound} is excluded"
            )));
        }
        Ok(CnInstance {
            excluded,
            universe_bound,
        })
    }

    /// The instance `{n : n > k}` is represented by excluding `0..=k`.
    pub fn above(k: u64) -> Self {
        CnInstance {
            excluded: (0..=k).collect(),
            universe_bound: k + 1,
        }
    }

    pub fn excluded(&self) -> &BTreeSet<u64> {
        &self.excluded
    }

    pub fn least_solution(&self) -> u64 {
        (0..=self.universe_bound)
            .find(|x| !self.excluded.contains(x))
            .expect("checked at construction")
    }
}

pub fn cn_is_solution(e: &CnInstance, x: u64) -> bool {
    !e.excluded.contains(&x)
}

/// A finite word over marks: entry `0` is a blank and entry `n + 1` is one
/// mark on color `n`. The word continues with blanks forever.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CfiWord(pub Vec<u32>);

impl CfiWord {
    pub fn new(entries: Vec<u32>) -> Self {
        CfiWord(entries)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mark_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for &e in &self.0 {
            if e > 0 {
                *counts.entry(e - 1).or_insert(0) += 1;
            }
        }
        counts
    }

    /// The colors marked at least once.
    pub fn colors(&self) -> BTreeSet<u32> {
        self.0.iter().filter(|&&e| e > 0).map(|e| e - 1).collect()
    }

    /// Colors with an odd mark count; membership in ψ is the complement.
    pub fn psi_complement(&self) -> BTreeSet<u32> {
        self.mark_counts()
            .into_iter()
            .filter(|&(_, c)| c % 2 == 1)
            .map(|(n, _)| n)
            .collect()
    }

    pub fn psi_contains(&self, n: u32) -> bool {
        self.0.iter().filter(|&&e| e == n + 1).count() % 2 == 0
    }

    pub fn concat(&self, other: &CfiWord) -> CfiWord {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        CfiWord(v)
    }
}

impl FromStr for CfiWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(CfiWord::default());
        }
        s.split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<u32>()
                    .map_err(|e| parse_err(1, format!("bad mark {tok:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(CfiWord)
    }
}

impl fmt::Display for CfiWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Cofinite set returned by [`cfi_psi`]: everything except `complement`.
pub fn cfi_psi(p: &CfiWord) -> BTreeSet<u32> {
    p.psi_complement()
}

/// Length-lexicographically least extension of `sigma` in which every color of
/// `sigma` has an even mark count: one extra mark per odd color, increasing.
pub fn cfi_bar(sigma: &CfiWord) -> CfiWord {
    let mut out = sigma.0.clone();
    out.extend(sigma.psi_complement().into_iter().map(|n| n + 1));
    CfiWord(out)
}

/// Binary stream instance of sorting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "EvpStream", into = "EvpStream")]
pub struct SortInstance {
    stream: EvpStream,
}

impl TryFrom<EvpStream> for SortInstance {
    type Error = Error;

    fn try_from(stream: EvpStream) -> Result<Self> {
        SortInstance::new(stream)
    }
}

impl From<SortInstance> for EvpStream {
    fn from(s: SortInstance) -> Self {
        s.stream
    }
}

impl SortInstance {
    pub fn new(stream: EvpStream) -> Result<Self> {
        if stream.alphabet() != 2 {
            let stream = stream.with_alphabet(2)?;
            return Ok(SortInstance { stream });
        }
        Ok(SortInstance { stream })
    }

    pub fn stream(&self) -> &EvpStream {
        &self.stream
    }
}

/// `None` for infinitely many zeros (solution `0^ω`), else the number of
/// zeros `n` (solution `0^n 1^ω`).
pub fn sort_eval(p: &SortInstance) -> Option<usize> {
    let s = &p.stream;
    if s.cycle().contains(&0) {
        None
    } else {
        Some(s.transient().iter().filter(|&&a| a == 0).count())
    }
}

/// Result of [`is_limit_homogeneous`]. `degenerate` is set for the empty set,
/// which is reported with color 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LimitColor {
    pub color: u32,
    pub degenerate: bool,
}

pub fn is_limit_homogeneous(c: &StableColoring, l: &BTreeSet<usize>) -> Option<LimitColor> {
    let mut limits = l.iter().map(|&x| c.limit_of_row(x));
    match limits.next() {
        None => Some(LimitColor {
            color: 0,
            degenerate: true,
        }),
        Some(first) => limits.all(|v| v == first).then_some(LimitColor {
            color: first,
            degenerate: false,
        }),
    }
}

pub fn is_homogeneous_window(c: &StableColoring, h: &BTreeSet<usize>) -> Result<Option<u32>> {
    if h.len() < 2 {
        return Err(Error::Precondition(
            "homogeneity needs at least two elements".into(),
        ));
    }
    let elems: Vec<usize> = h.iter().copied().collect();
    let first = c.eval(elems[0], elems[1]);
    for (i, &x) in elems.iter().enumerate() {
        for &y in &elems[i + 1..] {
            if c.eval(x, y) != first {
                return Ok(None);
            }
        }
    }
    Ok(Some(first))
}

fn search_limit(c: &StableColoring, len: usize) -> usize {
    let period = c.tail().len();
    c.explicit_bound() + c.settles_by() + period * (len + 2) + 2
}

/// First `len` elements of the greedy infinite homogeneous set with `color`.
/// Returns `None` when `color` is not the limit of infinitely many rows.
pub fn homogeneous_prefix(c: &StableColoring, color: u32, len: usize) -> Option<Vec<usize>> {
    if !c.tail_limits().contains(&color) {
        return None;
    }
    let mut h: Vec<usize> = Vec::with_capacity(len);
    let bound = search_limit(c, len) + c.settles_by() * len;
    for x in 0..bound {
        if h.len() == len {
            break;
        }
        if c.limit_of_row(x) == color && h.iter().all(|&a| c.eval(a, x) == color) {
            h.push(x);
        }
    }
    (h.len() == len).then_some(h)
}

/// First `len` rows whose limit is `color`, or `None` if there are not
/// infinitely many such rows.
pub fn limit_homogeneous_prefix(c: &StableColoring, color: u32, len: usize) -> Option<Vec<usize>> {
    if !c.tail_limits().contains(&color) {
        return None;
    }
    let v: Vec<usize> = (0..search_limit(c, len))
        .filter(|&x| c.limit_of_row(x) == color)
        .take(len)
        .collect();
    (v.len() == len).then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::StepFunction;

    fn w(s: &str) -> CfiWord {
        s.parse().unwrap()
    }

    #[test]
    fn lpo_answers() {
        assert_eq!(lpo_answer(&LpoInstance::zeros()), 0);
        assert_eq!(lpo_answer(&LpoInstance::flip_at(0)), 1);
        assert_eq!(lpo_answer(&LpoInstance::flip_at(7)), 1);
        let s = LpoInstance::flip_at(3);
        assert_eq!(
            (0..6).map(|z| s.value_at(z)).collect::<Vec<_>>(),
            [0, 0, 0, 1, 1, 1]
        );
    }

    #[test]
    fn cn_solutions() {
        let e = CnInstance::new(BTreeSet::from([0, 1]), 2).unwrap();
        assert!(cn_is_solution(&e, 2));
        assert!(!cn_is_solution(&e, 1));
        let e = CnInstance::new(BTreeSet::new(), 0).unwrap();
        assert!(cn_is_solution(&e, 0));
        assert!(CnInstance::new(BTreeSet::from([0, 1]), 1).is_err());
        assert_eq!(CnInstance::above(3).least_solution(), 4);
    }

    #[test]
    fn psi_examples() {
        assert!(cfi_psi(&w("1,1")).is_empty());
        assert_eq!(cfi_psi(&w("1")), BTreeSet::from([0]));
        // counts: color 1 twice, color 0 twice, color 2 once
        assert_eq!(cfi_psi(&w("2,1,1,2,3")), BTreeSet::from([2]));
        assert!(w("0,0").psi_contains(5));
    }

    #[test]
    fn bar_examples() {
        assert_eq!(cfi_bar(&w("")), w(""));
        assert_eq!(cfi_bar(&w("1")), w("1,1"));
        assert_eq!(cfi_bar(&w("2,1")), w("2,1,1,2"));
        assert_eq!(cfi_bar(&w("0,3")), w("0,3,3"));
    }

    #[test]
    fn sort_examples() {
        let p = |t: &str| SortInstance::new(t.parse().unwrap()).unwrap();
        assert_eq!(sort_eval(&p("0,0|1")), Some(2));
        assert_eq!(sort_eval(&p("|0,1")), None);
        assert_eq!(sort_eval(&p("1,0,1|1")), Some(1));
    }

    fn limits_001() -> StableColoring {
        StableColoring::with_default(
            2,
            vec![
                StepFunction::constant(0),
                StepFunction::constant(0),
                StepFunction::constant(1),
            ],
            1,
        )
        .unwrap()
    }

    #[test]
    fn limit_homogeneity() {
        let c = limits_001();
        assert_eq!(
            is_limit_homogeneous(&c, &BTreeSet::from([0, 1])).map(|l| l.color),
            Some(0)
        );
        assert_eq!(is_limit_homogeneous(&c, &BTreeSet::from([0, 2])), None);
        let empty = is_limit_homogeneous(&c, &BTreeSet::new()).unwrap();
        assert!(empty.degenerate);
        let ones = StableColoring::constant(2, 1).unwrap();
        assert_eq!(
            is_limit_homogeneous(&ones, &BTreeSet::from([3, 8, 40])).map(|l| l.color),
            Some(1)
        );
    }

    #[test]
    fn homogeneous_window() {
        let c = StableColoring::constant(3, 2).unwrap();
        assert_eq!(
            is_homogeneous_window(&c, &BTreeSet::from([1, 4])).unwrap(),
            Some(2)
        );
        assert!(is_homogeneous_window(&c, &BTreeSet::from([1])).is_err());
        // c(x, y) = (x + y) mod 2 on an explicit block
        let rows = (0..10)
            .map(|x| {
                StepFunction::new((0..12).map(|y| (y, ((x + y) % 2) as u32)).collect()).unwrap()
            })
            .collect();
        let c = StableColoring::with_default(2, rows, 0).unwrap();
        // pairs (2,5),(2,9),(5,9): 1,1,0
        assert_eq!(
            is_homogeneous_window(&c, &BTreeSet::from([2, 5, 9])).unwrap(),
            None
        );
        // pairs (1,3),(1,7),(3,7): all even sums
        assert_eq!(
            is_homogeneous_window(&c, &BTreeSet::from([1, 3, 7])).unwrap(),
            Some(0)
        );
        assert_eq!(
            is_homogeneous_window(&c, &BTreeSet::from([2, 5])).unwrap(),
            Some(1)
        );
    }

    #[test]
    fn solvers_respect_limits() {
        let c = limits_001();
        assert_eq!(limit_homogeneous_prefix(&c, 1, 3), Some(vec![2, 3, 4]));
        assert_eq!(limit_homogeneous_prefix(&c, 0, 1), None);
        let h = homogeneous_prefix(&c, 1, 4).unwrap();
        assert_eq!(h, vec![2, 3, 4, 5]);
    }
}
