#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rtwl::covering::{Dims, PsiTable};
use rtwl::streams::{EvpStream, StableColoring, StepFunction};

/// A surjective partial table: a random injection of the colors into cells,
/// then every other cell undefined with probability `hole`.
pub fn random_table(dims: &Dims, n: u32, hole: f64, rng: &mut impl Rng) -> PsiTable {
    let cells = dims.cells();
    assert!(n as usize <= cells);
    let mut order: Vec<usize> = (0..cells).collect();
    order.shuffle(rng);
    let mut values = vec![None; cells];
    for (color, &cell) in order.iter().take(n as usize).enumerate() {
        values[cell] = Some(color as u32);
    }
    for &cell in &order[n as usize..] {
        if !rng.gen_bool(hole) {
            values[cell] = Some(rng.gen_range(0..n));
        }
    }
    PsiTable::new(dims.clone(), n, values).unwrap()
}

pub fn random_stream(alphabet: u32, max_t: usize, max_c: usize, rng: &mut impl Rng) -> EvpStream {
    let t = rng.gen_range(0..=max_t);
    let c = rng.gen_range(1..=max_c);
    let transient = (0..t).map(|_| rng.gen_range(0..alphabet)).collect();
    let cycle = (0..c).map(|_| rng.gen_range(0..alphabet)).collect();
    EvpStream::new(transient, cycle, alphabet).unwrap()
}

pub fn random_step(k: u32, rng: &mut impl Rng) -> StepFunction {
    let mut pos = 0;
    let steps = (0..rng.gen_range(1..=3))
        .map(|_| {
            let s = (pos, rng.gen_range(0..k));
            pos += rng.gen_range(1..6);
            s
        })
        .collect();
    StepFunction::new(steps).unwrap()
}

pub fn random_coloring(k: u32, rng: &mut impl Rng) -> StableColoring {
    let rows = (0..rng.gen_range(0..6))
        .map(|_| random_step(k, rng))
        .collect();
    let tail = (0..rng.gen_range(1..=2))
        .map(|_| random_step(k, rng))
        .collect();
    StableColoring::new(k, rows, tail).unwrap()
}

/// Least extension of `sigma` by length, then lexicographically, in which
/// every color marked in `sigma` has an even count.
pub fn bar_oracle(sigma: &[u32]) -> Vec<u32> {
    let colors: BTreeSet<u32> = sigma.iter().filter(|&&e| e > 0).map(|e| e - 1).collect();
    let top = sigma.iter().copied().max().unwrap_or(0) + 1;
    let even = |w: &[u32]| {
        colors
            .iter()
            .all(|&n| w.iter().filter(|&&e| e == n + 1).count() % 2 == 0)
    };
    let base = u64::from(top) + 1;
    for len in 0u32.. {
        // index order equals lex order when the first position is most significant
        for idx in 0..base.pow(len) {
            let mut w = sigma.to_vec();
            w.extend((0..len).rev().map(|i| (idx / base.pow(i) % base) as u32));
            if even(&w) {
                return w;
            }
        }
    }
    unreachable!()
}

/// (∗) straight from the definition: every set of cells whose image is
/// exactly `s` covers a cell mapped outside `s` (undefined counts as outside
/// unless `strict`).
pub fn star_oracle(psi: &PsiTable, s: &BTreeSet<u32>, strict: bool) -> bool {
    if s.is_empty() || s.len() >= psi.n_colors() as usize {
        return false;
    }
    let dims = psi.dims();
    let pool: Vec<usize> = (0..dims.cells())
        .filter(|&c| psi.value(c).is_some_and(|v| s.contains(&v)))
        .collect();
    assert!(pool.len() <= 20, "oracle is exponential");
    for mask in 1u32..(1 << pool.len()) {
        let chosen: Vec<usize> = (0..pool.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| pool[i])
            .collect();
        let image: BTreeSet<u32> = chosen.iter().map(|&c| psi.value(c).unwrap()).collect();
        if image != *s {
            continue;
        }
        let tuples: Vec<Vec<u32>> = chosen.iter().map(|&c| dims.decode(c)).collect();
        let escapes = (0..dims.cells()).any(|cell| {
            let t = dims.decode(cell);
            let inside = (0..t.len()).all(|m| tuples.iter().any(|x| x[m] == t[m]));
            inside
                && match psi.value(cell) {
                    None => !strict,
                    Some(v) => !s.contains(&v),
                }
        });
        if !escapes {
            return false;
        }
    }
    true
}

/// Canonical key of a 2-coordinate table under row and column permutations,
/// transposition for square grids, and renaming colors by first appearance.
pub fn orbit_key(k0: usize, k1: usize, cells: &[Option<u32>]) -> Vec<u32> {
    let mut best: Option<Vec<u32>> = None;
    let rows = permutations(k0);
    let cols = permutations(k1);
    let flips: &[bool] = if k0 == k1 { &[false, true] } else { &[false] };
    for &flip in flips {
        for r in &rows {
            for c in &cols {
                let mut names = std::collections::HashMap::new();
                let key: Vec<u32> = (0..k0 * k1)
                    .map(|cell| {
                        let (i, j) = (r[cell / k1], c[cell % k1]);
                        let src = if flip { j * k1 + i } else { i * k1 + j };
                        match cells[src] {
                            None => 0,
                            Some(v) => {
                                let next = names.len() as u32 + 1;
                                *names.entry(v).or_insert(next)
                            }
                        }
                    })
                    .collect();
                if best.as_ref().is_none_or(|b| key < *b) {
                    best = Some(key);
                }
            }
        }
    }
    best.unwrap()
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..=p.len() {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

/// Number of orbits of surjective partial tables onto `n` colors.
pub fn orbit_count(k0: usize, k1: usize, n: u32, total: bool) -> usize {
    let cells = k0 * k1;
    let base = if total { n } else { n + 1 };
    let mut keys = std::collections::HashSet::new();
    let mut digits = vec![0u32; cells];
    loop {
        let table: Vec<Option<u32>> = digits
            .iter()
            .map(|&d| if total { Some(d) } else { d.checked_sub(1) })
            .collect();
        let image: BTreeSet<u32> = table.iter().flatten().copied().collect();
        if image.len() == n as usize {
            keys.insert(orbit_key(k0, k1, &table));
        }
        let mut i = 0;
        loop {
            if i == cells {
                return keys.len();
            }
            digits[i] += 1;
            if digits[i] < base {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Perfect matchings of `cells` points: (2c)! / (2^c c!).
pub fn matchings(cells: u64) -> u128 {
    let c = cells / 2;
    let mut num: u128 = 1;
    for i in 1..=2 * c {
        num *= u128::from(i);
    }
    let mut den: u128 = 1;
    for i in 1..=c {
        den *= 2 * u128::from(i);
    }
    num / den
}
