//! Forward and backward maps of the constructive reductions, run on finitely
//! presented instances.

use std::collections::BTreeSet;

use serde::Serialize;
use serde_json::{json, Value};

use crate::covering::{Dims, PsiTable};
use crate::error::{Error, Result};
use crate::problems::{
    cfi_bar, homogeneous_prefix, is_homogeneous_window, is_limit_homogeneous,
    limit_homogeneous_prefix, lpo_answer, CfiWord, LpoInstance,
};
use crate::streams::{lcm, transduce, EvpStream, StableColoring, StepFunction, Transducer};

fn product(ks: &[u32]) -> Result<u64> {
    ks.iter()
        .try_fold(1u64, |acc, &k| acc.checked_mul(u64::from(k)))
        .filter(|&p| p <= u64::from(u32::MAX))
        .ok_or_else(|| Error::InvalidDims("product of sides overflows u32".into()))
}

fn check_ks(ks: &[u32]) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::InvalidDims("need at least one factor".into()));
    }
    if ks.iter().any(|&k| k < 2) {
        return Err(Error::InvalidDims(
            "every factor needs at least two colors".into(),
        ));
    }
    product(ks).map(|_| ())
}

/// Mixed-radix code of `a`, first coordinate most significant.
pub fn product_code(a: &[u32], ks: &[u32]) -> Result<u32> {
    check_ks(ks)?;
    if a.len() != ks.len() {
        return Err(Error::InvalidArgument(format!(
            "tuple of length {} for {} factors",
            a.len(),
            ks.len()
        )));
    }
    let mut code = 0u32;
    for (&v, &k) in a.iter().zip(ks) {
        if v >= k {
            return Err(Error::SymbolOutOfRange {
                symbol: v,
                alphabet: k,
            });
        }
        code = code * k + v;
    }
    Ok(code)
}

pub fn product_decode(a: u32, ks: &[u32]) -> Result<Vec<u32>> {
    check_ks(ks)?;
    let total = product(ks)?;
    if u64::from(a) >= total {
        return Err(Error::SymbolOutOfRange {
            symbol: a,
            alphabet: total as u32,
        });
    }
    let mut out = vec![0u32; ks.len()];
    let mut rest = a;
    for (slot, &k) in out.iter_mut().zip(ks).rev() {
        *slot = rest % k;
        rest /= k;
    }
    Ok(out)
}

/// Pointwise product coding of several colorings into one.
pub fn product_encode(cs: &[EvpStream]) -> Result<EvpStream> {
    let ks: Vec<u32> = cs.iter().map(EvpStream::alphabet).collect();
    check_ks(&ks)?;
    let transient = cs.iter().map(|c| c.transient().len()).max().unwrap_or(0);
    let cycle = cs.iter().fold(1, |acc, c| lcm(acc, c.cycle().len()));
    let value = |i: usize| {
        let digits: Vec<u32> = cs.iter().map(|c| c.eval_at(i)).collect();
        product_code(&digits, &ks)
    };
    let t = (0..transient).map(value).collect::<Result<Vec<_>>>()?;
    let c = (transient..transient + cycle)
        .map(value)
        .collect::<Result<Vec<_>>>()?;
    EvpStream::new(t, c, product(&ks)? as u32)
}

/// The table `Ψ(a) = code(a)` of the product coding.
pub fn product_psi_table(ks: &[u32]) -> Result<PsiTable> {
    let dims = Dims::new(ks.to_vec())?;
    let n = dims.cells() as u32;
    let cells = (0..n).map(Some).collect();
    PsiTable::new(dims, n, cells)
}

/// Color ranges of the cascade: factor `m` reports colors in
/// `offsets[m] ..= offsets[m] + k_m - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CascadeRange {
    ks: Vec<u32>,
    offsets: Vec<u32>,
}

impl CascadeRange {
    pub fn new(ks: &[u32]) -> Result<Self> {
        check_ks(ks)?;
        let mut offsets = Vec::with_capacity(ks.len() + 1);
        let mut acc = 0u32;
        offsets.push(0);
        for &k in ks {
            acc = acc
                .checked_add(k - 1)
                .ok_or_else(|| Error::InvalidDims("color count overflows".into()))?;
            offsets.push(acc);
        }
        Ok(CascadeRange {
            ks: ks.to_vec(),
            offsets,
        })
    }

    pub fn ks(&self) -> &[u32] {
        &self.ks
    }

    /// `offsets[m] = Σ_{i<m} (k_i - 1)`, with one trailing entry for the top.
    pub fn offsets(&self) -> &[u32] {
        &self.offsets
    }

    pub fn n_colors(&self) -> u32 {
        self.offsets[self.ks.len()] + 1
    }

    pub fn low(&self, m: usize) -> u32 {
        self.offsets[m]
    }

    pub fn high(&self, m: usize) -> u32 {
        self.offsets[m + 1]
    }
}

/// Running argmax of occurrence counts over colors `0 ..= high`, smallest
/// color on ties, clamped up to `low`. Emits absolute colors.
#[derive(Debug, Clone)]
pub struct CascadeTransducer {
    low: u32,
    high: u32,
    counts: Vec<u64>,
}

impl CascadeTransducer {
    pub fn new(range: &CascadeRange, m: usize) -> Self {
        CascadeTransducer {
            low: range.low(m),
            high: range.high(m),
            counts: vec![0; range.n_colors() as usize],
        }
    }
}

impl Transducer for CascadeTransducer {
    fn step(&mut self, input: u32) -> u32 {
        self.counts[input as usize] += 1;
        let mut best = 0u32;
        for color in 1..=self.high {
            if self.counts[color as usize] > self.counts[best as usize] {
                best = color;
            }
        }
        best.max(self.low)
    }
}

fn check_cascade_input(c: &EvpStream, range: &CascadeRange) -> Result<()> {
    if c.alphabet() != range.n_colors() {
        return Err(Error::InvalidArgument(format!(
            "stream alphabet {} but the cascade needs {} colors",
            c.alphabet(),
            range.n_colors()
        )));
    }
    Ok(())
}

/// The transducers computing `d_0, .., d_n` from `c`.
pub fn cascade_forward(c: &EvpStream, ks: &[u32]) -> Result<Vec<CascadeTransducer>> {
    let range = CascadeRange::new(ks)?;
    check_cascade_input(c, &range)?;
    Ok((0..ks.len())
        .map(|m| CascadeTransducer::new(&range, m))
        .collect())
}

/// The outputs `d_m` as exact eventually periodic streams.
///
/// After the transient, each cycle adds a fixed vector to the counts. Colors
/// with less than the top rate in range fall behind by at least one per
/// cycle, and they start at most `|t| + |c|` ahead, so after that many more
/// cycles the argmax depends only on the phase within the cycle.
pub fn cascade_exact(c: &EvpStream, ks: &[u32]) -> Result<Vec<EvpStream>> {
    let range = CascadeRange::new(ks)?;
    check_cascade_input(c, &range)?;
    let t = c.transient().len();
    let p = c.cycle().len();
    let settle = t + p * (t + p + 2);
    (0..ks.len())
        .map(|m| {
            let mut d = CascadeTransducer::new(&range, m);
            let out = transduce(c, &mut d, settle + p);
            let stream = EvpStream::new(
                out[..settle].to_vec(),
                out[settle..].to_vec(),
                range.n_colors(),
            )?;
            Ok(stream)
        })
        .collect()
}

/// Scans `m = n, .., 0` and returns the first `a_m` above its offset, or 0.
pub fn cascade_backward(a: &[u32], ks: &[u32]) -> Result<u32> {
    let range = CascadeRange::new(ks)?;
    if a.len() != ks.len() {
        return Err(Error::InvalidArgument(format!(
            "tuple of length {} for {} factors",
            a.len(),
            ks.len()
        )));
    }
    for (m, &v) in a.iter().enumerate() {
        if v < range.low(m) || v > range.high(m) {
            return Err(Error::InvalidArgument(format!(
                "component {m} is {v}, outside {}..={}",
                range.low(m),
                range.high(m)
            )));
        }
    }
    for m in (0..ks.len()).rev() {
        if a[m] != range.low(m) {
            return Ok(a[m]);
        }
    }
    Ok(0)
}

/// [`cascade_backward`] on 0-based coordinates, as a table.
pub fn cascade_psi_table(ks: &[u32]) -> Result<PsiTable> {
    let range = CascadeRange::new(ks)?;
    let dims = Dims::new(ks.to_vec())?;
    PsiTable::from_fn(dims, range.n_colors(), |t| {
        let shifted: Vec<u32> = t
            .iter()
            .enumerate()
            .map(|(m, &v)| v + range.low(m))
            .collect();
        cascade_backward(&shifted, ks).ok()
    })
}

fn parity(x: usize) -> u32 {
    (x % 2) as u32
}

/// `c(x, y) = par(x)` while `S` is zero below `y`, and `1 - par(x)` after.
pub fn lpo_balanced_encode(s: &LpoInstance) -> StableColoring {
    let tail = match s.flip {
        None => vec![StepFunction::constant(0), StepFunction::constant(1)],
        Some(n) => vec![
            StepFunction::switch_at(0, n + 1, 1),
            StepFunction::switch_at(1, n + 1, 0),
        ],
    };
    StableColoring::new(2, Vec::new(), tail).expect("binary rows")
}

/// Reads the least two elements `x0 < x1` of a homogeneous set: 0 iff
/// `c(x0, x1) = par(x0)`.
pub fn lpo_balanced_decode(c: &StableColoring, x0: usize, x1: usize) -> Result<u32> {
    if x0 >= x1 {
        return Err(Error::InvalidArgument(format!(
            "need x0 < x1, got {x0}, {x1}"
        )));
    }
    if parity(x0) != parity(x1) {
        return Err(Error::Precondition(format!(
            "{x0} and {x1} differ in parity, so they cannot lie in one homogeneous set"
        )));
    }
    Ok(u32::from(c.eval(x0, x1) != parity(x0)))
}

/// `1` when `S(x) = S(y)`, else `0`.
fn same_value_coloring(s: &LpoInstance) -> StableColoring {
    let rows = match s.flip {
        None => Vec::new(),
        Some(n) => (0..n).map(|_| StepFunction::switch_at(1, n, 0)).collect(),
    };
    StableColoring::new(2, rows, vec![StepFunction::constant(1)]).expect("binary rows")
}

/// `d(x, y) = c(x, y)` when `S(x) = S(y)`, else 2.
pub fn lpo_srt3_encode(s: &LpoInstance, c: &StableColoring) -> Result<StableColoring> {
    if c.k() != 2 {
        return Err(Error::InvalidArgument(format!(
            "expected a 2-coloring, got {} colors",
            c.k()
        )));
    }
    let same = same_value_coloring(s);
    StableColoring::zip_with(&[c, &same], 3, |v| if v[1] == 1 { v[0] } else { 2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Decoded {
    pub answer: u32,
    /// The solution could not have come from the encoded instance.
    pub pre_violation: bool,
}

/// 1 iff `S` has flipped at or before `min H`.
pub fn lpo_srt3_decode(s: &LpoInstance, min_h: usize) -> Decoded {
    match s.flip {
        None => Decoded {
            answer: 0,
            pre_violation: false,
        },
        Some(n) => Decoded {
            answer: u32::from(n <= min_h),
            pre_violation: min_h < n,
        },
    }
}

/// `e(x, y) = i_c` when `c(x, y) = i_c` or `d(x, y) = i_d`, else `c(x, y)`.
pub fn wub_merge(
    c: &StableColoring,
    i_c: u32,
    d: &StableColoring,
    i_d: u32,
) -> Result<StableColoring> {
    if i_c >= c.k() {
        return Err(Error::SymbolOutOfRange {
            symbol: i_c,
            alphabet: c.k(),
        });
    }
    if d.k() != 2 {
        return Err(Error::InvalidArgument(
            "second coloring must use 2 colors".into(),
        ));
    }
    if i_d >= 2 {
        return Err(Error::SymbolOutOfRange {
            symbol: i_d,
            alphabet: 2,
        });
    }
    StableColoring::zip_with(&[c, d], c.k(), |v| {
        if v[0] == i_c || v[1] == i_d {
            i_c
        } else {
            v[0]
        }
    })
}

/// `c(x, y) = 1` when `S(x) = S(y)`, else 0; 0 is the unbalancing witness.
pub fn lpo_wub_encode(s: &LpoInstance) -> StableColoring {
    same_value_coloring(s)
}

/// 1 iff some `x <= min L` has `S(x) = 1`.
pub fn lpo_wub_decode(s: &LpoInstance, min_l: usize) -> u32 {
    u32::from(s.flip.is_some_and(|n| n <= min_l))
}

/// `d(x, y) = c(x, y)` when `S(x) = S(y)`, else `ℓ(y)`.
///
/// The limit of `ℓ` must not be the limit of infinitely many rows of `c`.
pub fn dchar_encode(
    s: &LpoInstance,
    c: &StableColoring,
    ell: &StepFunction,
) -> Result<StableColoring> {
    let i = ell.limit();
    if ell.max_value() >= c.k() {
        return Err(Error::SymbolOutOfRange {
            symbol: ell.max_value(),
            alphabet: c.k(),
        });
    }
    if c.tail_limits().contains(&i) {
        return Err(Error::Precondition(format!(
            "lim ℓ = {i} is the limit of infinitely many rows"
        )));
    }
    let same = same_value_coloring(s);
    let ell_col = StableColoring::column_function(c.k(), ell.clone())?;
    StableColoring::zip_with(&[c, &same, &ell_col], c.k(), |v| {
        if v[1] == 1 {
            v[0]
        } else {
            v[2]
        }
    })
}

/// `d(x, y) = 1` iff `c(x, y) = 1 - ℓ(y)`. Fails validation unless almost
/// every row of the result has limit 1.
pub fn dwub_to_cfi(c: &StableColoring, ell: &StepFunction) -> Result<StableColoring> {
    if c.k() != 2 || ell.max_value() >= 2 {
        return Err(Error::InvalidArgument("expected 2-colorings".into()));
    }
    let ell_col = StableColoring::column_function(2, ell.clone())?;
    let d = StableColoring::zip_with(&[c, &ell_col], 2, |v| u32::from(v[0] == 1 - v[1]))?;
    if d.tail_limits() != BTreeSet::from([1]) {
        return Err(Error::Validation(format!(
            "rows of the periodic tail have limits {:?}; a CFI instance needs 1 on almost all rows",
            d.tail_limits()
        )));
    }
    Ok(d)
}

/// `σ̄` followed by `p` with each color `n` renamed to `n + 1 + max[σ]`.
/// With empty `σ` the renaming is the identity.
pub fn cfi_relabel(p: &CfiWord, sigma: &CfiWord) -> CfiWord {
    let shift = sigma.colors().iter().next_back().map_or(0, |&m| m + 1);
    let moved = CfiWord::new(
        p.entries()
            .iter()
            .map(|&e| if e == 0 { 0 } else { e + shift })
            .collect(),
    );
    cfi_bar(sigma).concat(&moved)
}

/// Intersects `ψ(p)` with `{n : n > k}` by giving every `n <= k` with an
/// even count one more mark.
pub fn cfi_meet_tail(p: &CfiWord, k: u32) -> CfiWord {
    let counts = p.mark_counts();
    let extra: Vec<u32> = (0..=k)
        .filter(|n| counts.get(n).copied().unwrap_or(0) % 2 == 0)
        .map(|n| n + 1)
        .collect();
    p.concat(&CfiWord::new(extra))
}

/// One run of a reduction: the instance, what the forward map produced, the
/// solution read off the encoded instance, the backward map's output, and
/// whether that output solves the original instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionTrace {
    pub reduction: String,
    pub instance: Value,
    pub encoded: Value,
    pub solution: Value,
    pub decoded: Value,
    pub valid: bool,
}

/// Number of solution elements reported in traces.
pub const TRACE_PREFIX: usize = 4;

fn cartesian(sets: &[Vec<u32>]) -> Vec<Vec<u32>> {
    sets.iter().fold(vec![Vec::new()], |acc, s| {
        acc.iter()
            .flat_map(|prefix| {
                s.iter().map(move |&v| {
                    let mut t = prefix.clone();
                    t.push(v);
                    t
                })
            })
            .collect()
    })
}

pub fn trace_cascade(c: &EvpStream, ks: &[u32]) -> Result<ReductionTrace> {
    let d = cascade_exact(c, ks)?;
    let io: Vec<Vec<u32>> = d
        .iter()
        .map(|s| s.infinitely_often().into_iter().collect())
        .collect();
    let target = c.infinitely_often();
    let mut valid = true;
    for a in cartesian(&io) {
        valid &= target.contains(&cascade_backward(&a, ks)?);
    }
    let chosen: Vec<u32> = io.iter().map(|s| s[0]).collect();
    let decoded = cascade_backward(&chosen, ks)?;
    Ok(ReductionTrace {
        reduction: "cascade".into(),
        instance: json!({ "stream": c.to_string(), "ks": ks }),
        encoded: json!(io),
        solution: json!(chosen),
        decoded: json!(decoded),
        valid,
    })
}

pub fn trace_product(cs: &[EvpStream]) -> Result<ReductionTrace> {
    let ks: Vec<u32> = cs.iter().map(EvpStream::alphabet).collect();
    let e = product_encode(cs)?;
    let chosen = *e.infinitely_often().iter().next().expect("nonempty cycle");
    let decoded = product_decode(chosen, &ks)?;
    let valid = decoded
        .iter()
        .zip(cs)
        .all(|(v, c)| c.infinitely_often().contains(v));
    Ok(ReductionTrace {
        reduction: "product".into(),
        instance: json!(cs.iter().map(ToString::to_string).collect::<Vec<_>>()),
        encoded: json!(e.to_string()),
        solution: json!(chosen),
        decoded: json!(decoded),
        valid,
    })
}

fn some_homogeneous(
    c: &StableColoring,
    allowed: impl Fn(u32) -> bool,
) -> Result<(u32, Vec<usize>)> {
    c.tail_limits()
        .into_iter()
        .filter(|&i| allowed(i))
        .find_map(|i| homogeneous_prefix(c, i, TRACE_PREFIX).map(|h| (i, h)))
        .ok_or_else(|| Error::Validation("no infinite homogeneous set found".into()))
}

fn some_limit_homogeneous(
    c: &StableColoring,
    allowed: impl Fn(u32) -> bool,
) -> Result<(u32, Vec<usize>)> {
    c.tail_limits()
        .into_iter()
        .filter(|&i| allowed(i))
        .find_map(|i| limit_homogeneous_prefix(c, i, TRACE_PREFIX).map(|h| (i, h)))
        .ok_or_else(|| Error::Validation("no infinite limit-homogeneous set found".into()))
}

pub fn trace_lpo_balanced(s: &LpoInstance) -> Result<ReductionTrace> {
    let c = lpo_balanced_encode(s);
    let (color, h) = some_homogeneous(&c, |_| true)?;
    let answer = lpo_balanced_decode(&c, h[0], h[1])?;
    Ok(ReductionTrace {
        reduction: "lpo-balanced".into(),
        instance: json!(s),
        encoded: json!(c),
        solution: json!({ "color": color, "prefix": h }),
        decoded: json!(answer),
        valid: answer == lpo_answer(s),
    })
}

pub fn trace_lpo_srt3(s: &LpoInstance, c: &StableColoring) -> Result<ReductionTrace> {
    let d = lpo_srt3_encode(s, c)?;
    let (color, h) = some_homogeneous(&d, |i| i < 2)?;
    let dec = lpo_srt3_decode(s, h[0]);
    Ok(ReductionTrace {
        reduction: "lpo-srt3".into(),
        instance: json!({ "lpo": s, "coloring": c }),
        encoded: json!(d),
        solution: json!({ "color": color, "prefix": h }),
        decoded: json!(dec),
        valid: !dec.pre_violation && dec.answer == lpo_answer(s),
    })
}

pub fn trace_lpo_wub(s: &LpoInstance) -> Result<ReductionTrace> {
    let c = lpo_wub_encode(s);
    let (color, l) = some_limit_homogeneous(&c, |i| i != 0)?;
    let answer = lpo_wub_decode(s, l[0]);
    Ok(ReductionTrace {
        reduction: "lpo-wub".into(),
        instance: json!(s),
        encoded: json!(c),
        solution: json!({ "color": color, "prefix": l }),
        decoded: json!(answer),
        valid: answer == lpo_answer(s),
    })
}

pub fn trace_wub_merge(
    c: &StableColoring,
    i_c: u32,
    d: &StableColoring,
    i_d: u32,
) -> Result<ReductionTrace> {
    let e = wub_merge(c, i_c, d, i_d)?;
    let (color, h) = some_homogeneous(&e, |_| true)?;
    let set: BTreeSet<usize> = h.iter().copied().collect();
    let valid = if color != i_c {
        is_homogeneous_window(c, &set)? == Some(color)
    } else {
        h.iter().enumerate().all(|(i, &x)| {
            h[i + 1..]
                .iter()
                .all(|&y| c.eval(x, y) == i_c || d.eval(x, y) == i_d)
        })
    };
    Ok(ReductionTrace {
        reduction: "wub-merge".into(),
        instance: json!({ "c": c, "i_c": i_c, "d": d, "i_d": i_d }),
        encoded: json!(e),
        solution: json!({ "color": color, "prefix": h }),
        decoded: json!({ "color": color, "prefix": h }),
        valid,
    })
}

pub fn trace_dchar(
    s: &LpoInstance,
    c: &StableColoring,
    ell: &StepFunction,
) -> Result<ReductionTrace> {
    let d = dchar_encode(s, c, ell)?;
    let (color, l) = some_limit_homogeneous(&d, |_| true)?;
    let answer = lpo_wub_decode(s, l[0]);
    let set: BTreeSet<usize> = l.iter().copied().collect();
    let still_solves = is_limit_homogeneous(c, &set).is_some_and(|lc| lc.color == color);
    Ok(ReductionTrace {
        reduction: "dchar".into(),
        instance: json!({ "lpo": s, "coloring": c, "ell": ell }),
        encoded: json!(d),
        solution: json!({ "color": color, "prefix": l }),
        decoded: json!({ "answer": answer, "prefix": l }),
        valid: answer == lpo_answer(s) && still_solves,
    })
}

pub fn trace_dwub_cfi(c: &StableColoring, ell: &StepFunction) -> Result<ReductionTrace> {
    let d = dwub_to_cfi(c, ell)?;
    let l = limit_homogeneous_prefix(&d, 1, TRACE_PREFIX)
        .ok_or_else(|| Error::Validation("no rows with limit 1".into()))?;
    let set: BTreeSet<usize> = l.iter().copied().collect();
    let valid = is_limit_homogeneous(c, &set).is_some();
    Ok(ReductionTrace {
        reduction: "dwub-cfi".into(),
        instance: json!({ "coloring": c, "ell": ell }),
        encoded: json!(d),
        solution: json!(l),
        decoded: json!(l),
        valid,
    })
}

pub fn trace_cfi_relabel(p: &CfiWord, sigma: &CfiWord) -> ReductionTrace {
    let out = cfi_relabel(p, sigma);
    let shift = sigma.colors().iter().next_back().map_or(0, |&m| m + 1);
    let top = p.colors().iter().next_back().map_or(0, |&m| m + 1) + shift + 1;
    let valid = (shift..=top).all(|n| out.psi_contains(n) == p.psi_contains(n - shift));
    ReductionTrace {
        reduction: "cfi-relabel".into(),
        instance: json!({ "p": p.to_string(), "sigma": sigma.to_string() }),
        encoded: json!(out.to_string()),
        solution: json!(out.psi_complement()),
        decoded: json!(p.psi_complement()),
        valid,
    }
}

pub fn trace_cfi_meet_tail(p: &CfiWord, k: u32) -> ReductionTrace {
    let out = cfi_meet_tail(p, k);
    let top = p.colors().iter().next_back().map_or(0, |&m| m).max(k) + 1;
    let valid = (0..=top).all(|n| out.psi_contains(n) == (p.psi_contains(n) && n > k));
    ReductionTrace {
        reduction: "cfi-meet-tail".into(),
        instance: json!({ "p": p.to_string(), "k": k }),
        encoded: json!(out.to_string()),
        solution: json!(out.psi_complement()),
        decoded: json!(out.psi_complement()),
        valid,
    }
}
