//! Acceptance criteria, one line per criterion. Runs sequentially so the
//! timing checks see an otherwise idle process.
//!
//! `cargo test --test acceptance -- 2 4` runs only criteria 2 and 4.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtwl::covering::{
    find_star_witness, is_bad_bruteforce, is_bad_structural, star_holds_for, Dims, EscapeMode,
    PsiTable, WitnessSearch,
};
use rtwl::problems::{
    cfi_bar, cfi_psi, homogeneous_prefix, is_homogeneous_window, lpo_answer, CfiWord, LpoInstance,
};
use rtwl::reductions::{
    cascade_backward, cascade_exact, cascade_forward, cascade_psi_table, cfi_meet_tail,
    cfi_relabel, lpo_balanced_decode, lpo_balanced_encode, lpo_srt3_decode, lpo_srt3_encode,
    product_code, product_decode, product_encode, product_psi_table,
};
use rtwl::search::{
    canonicalize, enumerate_pairings, enumerate_psis, verify_nonreduction, SearchConfig, Symmetry,
    TableConstraints, Verdict, BAD_LIMIT_44, DEFAULT_RAW_CAP,
};
use rtwl::streams::{transduce_summary, EvpStream, StableColoring};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn dims(ks: &[u32]) -> Dims {
    Dims::new(ks.to_vec()).unwrap()
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn grid_check() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/grid44.grid");
    let start = Instant::now();
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let psi = PsiTable::from_grid_text(&text, None).map_err(|e| e.to_string())?;
    check(psi.n_colors() == 8, "grid should use 8 colors")?;
    let small = find_star_witness(&psi, 2, EscapeMode::Inclusive, 10_000_000);
    check(
        small == WitnessSearch::NoneUpTo { max_size: 2 },
        format!("max-size 2 gave {small:?}"),
    )?;
    let WitnessSearch::Found { witness } =
        find_star_witness(&psi, 3, EscapeMode::Inclusive, 10_000_000)
    else {
        return Err("max-size 3 found nothing".into());
    };
    let verified = star_holds_for(&psi, &witness.as_set(), EscapeMode::Inclusive).unwrap();
    let elapsed = start.elapsed();
    check(verified, "witness failed re-verification")?;
    check(
        elapsed < Duration::from_secs(1),
        format!("took {}", secs(elapsed)),
    )?;
    Ok(format!(
        "no witness of size <= 2, witness {:?} at size 3, {}",
        witness.colors(),
        secs(elapsed)
    ))
}

struct SweepTimes {
    one: Duration,
    four: Duration,
}

fn sweep_config(workers: usize) -> SearchConfig {
    SearchConfig {
        workers,
        ..SearchConfig::default()
    }
}

fn pairing_sweep(times: &mut Option<SweepTimes>) -> Outcome {
    let d = dims(&[4, 4]);
    let pairings = enumerate_pairings(&d).map_err(|e| e.to_string())?.len();
    check(pairings == 2_027_025, format!("{pairings} pairings"))?;
    check(
        u128::from(pairings) == common::matchings(16),
        "pairing count disagrees with (2c)!/(2^c c!)",
    )?;

    let start = Instant::now();
    let one = verify_nonreduction(&d, 8, &sweep_config(1)).map_err(|e| e.to_string())?;
    let t1 = start.elapsed();
    let start = Instant::now();
    let four = verify_nonreduction(&d, 8, &sweep_config(4)).map_err(|e| e.to_string())?;
    let t4 = start.elapsed();
    *times = Some(SweepTimes { one: t1, four: t4 });

    let r = &one.report;
    let census = r.census.as_ref().ok_or("no census in report")?;
    check(
        r.pairing_branch.candidates == pairings,
        "sweep skipped pairings",
    )?;
    check(
        r.pairing_branch.refuted == pairings,
        format!(
            "{} pairings without a verified witness",
            pairings - r.pairing_branch.refuted
        ),
    )?;
    check(
        census.collections_per_pairing == 56,
        "expected 56 collections per pairing",
    )?;
    check(
        census.histogram[56] == 0,
        "some pairing has all 56 collections bad",
    )?;
    check(
        census.max_bad <= BAD_LIMIT_44 && census.over_limit.is_empty(),
        format!("max bad count {}", census.max_bad),
    )?;
    check(
        r.verdict == Verdict::Refuted,
        format!("verdict {}", r.verdict),
    )?;
    check(
        t1 < Duration::from_secs(15 * 60),
        format!("single worker took {}", secs(t1)),
    )?;
    let a = serde_json::to_string(&one.report).unwrap();
    let b = serde_json::to_string(&four.report).unwrap();
    check(a == b, "reports differ between 1 and 4 workers")?;
    Ok(format!(
        "{pairings} pairings, max bad {} of 56, every pairing has a good triple, 1 worker {}, reports identical at 4 workers",
        census.max_bad,
        secs(t1)
    ))
}

fn sweep_speedup(times: &Option<SweepTimes>) -> Outcome {
    let t = times.as_ref().ok_or("sweep did not run")?;
    let speedup = t.one.as_secs_f64() / t.four.as_secs_f64();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let detail = format!(
        "1 worker {}, 4 workers {}, speedup {speedup:.2}x on {cores} available core(s)",
        secs(t.one),
        secs(t.four)
    );
    // linear up to 4 workers, allowing 25% overhead
    check(speedup >= 3.0, format!("{detail}; need >= 3.00x"))?;
    Ok(detail)
}

fn oracle_equivalence() -> Outcome {
    let d = dims(&[4, 4]);
    let cfg = SearchConfig {
        cross_check: true,
        ..SearchConfig::default()
    };
    let (census, pairings, _) =
        rtwl::search::bad_collection_census(&d, &cfg).map_err(|e| e.to_string())?;
    check(census.cross_checked, "cross-check did not run")?;
    check(
        census.disagreements == 0,
        format!(
            "{} disagreements: {:?}",
            census.disagreements, census.disagreement_examples
        ),
    )?;
    let exhaustive = pairings * census.collections_per_pairing;

    // independent table-level path on sampled pairings
    let e = enumerate_pairings(&d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sampled = 0u64;
    while sampled < 100_000 {
        let psi = e.unrank(rng.gen_range(0..e.len())).to_table();
        for a in 0..8u32 {
            for b in a + 1..8 {
                for c in b + 1..8 {
                    let three = BTreeSet::from([a, b, c]);
                    let s = is_bad_structural(&psi, &three).unwrap();
                    let f = is_bad_bruteforce(&psi, &three).unwrap();
                    check(s == f, format!("table-level disagreement on {three:?}"))?;
                    sampled += 1;
                }
            }
        }
    }
    Ok(format!(
        "{exhaustive} (pairing, collection) pairs exhaustively, plus {sampled} sampled through the table-level checks, 0 disagreements"
    ))
}

fn small_refutations() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for (ks, n) in [([2u32, 2], 4u32), ([2, 3], 5), ([2, 4], 6), ([3, 3], 6)] {
        let d = dims(&ks);
        let run =
            verify_nonreduction(&d, n, &SearchConfig::default()).map_err(|e| e.to_string())?;
        let r = &run.report;
        check(
            r.verdict == Verdict::Refuted,
            format!(
                "{ks:?} -> {n}: {} with {} failures",
                r.verdict,
                r.failures.len()
            ),
        )?;
        check(
            r.refuted == r.enumerated,
            format!("{ks:?} -> {n}: not every candidate refuted"),
        )?;
        // re-derive and re-verify every witness
        let tables = enumerate_psis(&d, n, TableConstraints::default(), true, DEFAULT_RAW_CAP)
            .map_err(|e| e.to_string())?;
        check(
            tables.len() as u64 == r.enumerated,
            "candidate count changed",
        )?;
        for psi in &tables {
            let WitnessSearch::Found { witness } =
                find_star_witness(psi, n as usize, EscapeMode::Inclusive, 10_000_000)
            else {
                return Err(format!("no witness for\n{}", psi.to_grid_text().unwrap()));
            };
            check(
                star_holds_for(psi, &witness.as_set(), EscapeMode::Inclusive).unwrap(),
                "witness failed re-verification",
            )?;
        }
        parts.push(format!("{ks:?}->{n}: {} tables", r.enumerated));
    }
    let elapsed = start.elapsed();
    check(
        elapsed < Duration::from_secs(600),
        format!("took {}", secs(elapsed)),
    )?;
    Ok(format!(
        "{}, all refuted, {}",
        parts.join(", "),
        secs(elapsed)
    ))
}

fn all_sets(n: u32) -> impl Iterator<Item = BTreeSet<u32>> {
    (1u32..(1 << n) - 1).map(move |m| (0..n).filter(|c| m >> c & 1 == 1).collect())
}

fn negative_control() -> Outcome {
    let product = product_psi_table(&[2, 2]).map_err(|e| e.to_string())?;
    let found = find_star_witness(&product, 4, EscapeMode::Inclusive, 1_000_000);
    check(
        matches!(found, WitnessSearch::Found { .. }),
        format!("product table: {found:?}"),
    )?;
    let cascade = cascade_psi_table(&[2, 2]).map_err(|e| e.to_string())?;
    check(
        cascade.n_colors() == 3,
        "cascade table should have 3 colors",
    )?;
    let mut candidates = 0;
    for s in all_sets(3) {
        for mode in [EscapeMode::Inclusive, EscapeMode::Strict] {
            check(
                !star_holds_for(&cascade, &s, mode).unwrap(),
                format!("cascade table satisfies (*) on {s:?}"),
            )?;
        }
        candidates += 1;
    }
    check(candidates == 6, "expected 6 candidate sets")?;
    let none = find_star_witness(&cascade, 3, EscapeMode::Inclusive, 1_000_000);
    check(
        none == WitnessSearch::NoneUpTo { max_size: 3 },
        format!("cascade search: {none:?}"),
    )?;
    Ok("product (2,2)->4 admits a witness; cascade (2,2)->3 admits none of 6 sets".into())
}

fn cascade_correctness() -> Outcome {
    let ks = [2u32, 2];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut tuples = 0;
    for _ in 0..1000 {
        let c = common::random_stream(3, 10, 8, &mut rng);
        let io = c.infinitely_often();
        let exact = cascade_exact(&c, &ks).map_err(|e| e.to_string())?;
        let mut windows = Vec::new();
        for (m, mut d) in cascade_forward(&c, &ks).unwrap().into_iter().enumerate() {
            let w = transduce_summary(&c, &mut d, c.default_horizon(), c.default_window()).unwrap();
            check(
                w == exact[m].infinitely_often(),
                format!("{c}: window of d{m} {w:?} differs from exact tail"),
            )?;
            windows.push(w.into_iter().collect::<Vec<_>>());
        }
        for &a0 in &windows[0] {
            for &a1 in &windows[1] {
                let back = cascade_backward(&[a0, a1], &ks).unwrap();
                check(io.contains(&back), format!("{c}: ({a0},{a1}) -> {back}"))?;
                tuples += 1;
            }
        }
    }
    for (color, want) in [(2u32, [0u32, 2]), (0, [0, 1]), (1, [1, 1])] {
        let c = EvpStream::constant(color, 3).unwrap();
        let d = cascade_exact(&c, &ks).unwrap();
        let got: Vec<Vec<u32>> = d
            .iter()
            .map(|s| s.infinitely_often().into_iter().collect())
            .collect();
        check(
            got == vec![vec![want[0]], vec![want[1]]],
            format!("constant {color}: tails {got:?}"),
        )?;
        check(
            cascade_backward(&want, &ks).unwrap() == color,
            format!("constant {color} decodes wrongly"),
        )?;
    }
    Ok(format!(
        "1000 streams, {tuples} tail tuples decoded into recurring colors; constants trace (0,2)->2, (0,1)->0, (1,1)->1"
    ))
}

fn product_round_trip() -> Outcome {
    let mut checked = 0;
    for ks in [vec![2u32, 2], vec![2, 3]] {
        let total: u32 = ks.iter().product();
        for a in 0..total {
            let digits = product_decode(a, &ks).unwrap();
            check(
                product_code(&digits, &ks).unwrap() == a,
                format!("code {a}"),
            )?;
            let streams: Vec<EvpStream> = digits
                .iter()
                .zip(&ks)
                .map(|(&v, &k)| EvpStream::constant(v, k).unwrap())
                .collect();
            let coded = product_encode(&streams).unwrap();
            check(
                coded.infinitely_often() == BTreeSet::from([a]) && coded.is_eventually_constant(),
                format!("constant tuple {digits:?} did not encode to constant {a}"),
            )?;
            let back = product_decode(*coded.infinitely_often().first().unwrap(), &ks).unwrap();
            check(
                back == digits,
                format!("tuple {digits:?} came back as {back:?}"),
            )?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} codes and constant tuples round-trip for (2,2) and (2,3)"
    ))
}

fn homogeneous_solutions(
    c: &StableColoring,
    allowed: impl Fn(u32) -> bool,
) -> Vec<(u32, Vec<usize>)> {
    c.tail_limits()
        .into_iter()
        .filter(|&i| allowed(i))
        .map(|i| {
            let h = homogeneous_prefix(c, i, 6).expect("tail color has a homogeneous set");
            (i, h)
        })
        .collect()
}

fn lpo_codings() -> Outcome {
    let flips = std::iter::once(None).chain((0..=50).map(Some));
    let base = [
        lpo_balanced_encode(&LpoInstance::zeros()),
        StableColoring::constant(2, 0).unwrap(),
        StableColoring::constant(2, 1).unwrap(),
    ];
    let mut cases = 0;
    for flip in flips {
        let s = LpoInstance { flip };
        let want = lpo_answer(&s);

        let c = lpo_balanced_encode(&s);
        let sols = homogeneous_solutions(&c, |_| true);
        check(!sols.is_empty(), format!("{flip:?}: no homogeneous set"))?;
        for (color, h) in sols {
            let set: BTreeSet<usize> = h.iter().copied().collect();
            check(
                is_homogeneous_window(&c, &set).unwrap() == Some(color),
                format!("{flip:?}: {h:?} is not homogeneous"),
            )?;
            let got = lpo_balanced_decode(&c, h[0], h[1]).map_err(|e| e.to_string())?;
            check(got == want, format!("balanced {flip:?}: decoded {got}"))?;
            cases += 1;
        }

        for c in &base {
            let d = lpo_srt3_encode(&s, c).map_err(|e| e.to_string())?;
            check(
                !d.tail_limits().contains(&2),
                format!("{flip:?}: color 2 recurs"),
            )?;
            for (color, h) in homogeneous_solutions(&d, |i| i < 2) {
                let set: BTreeSet<usize> = h.iter().copied().collect();
                check(
                    is_homogeneous_window(&d, &set).unwrap() == Some(color),
                    format!("{flip:?}: {h:?} is not homogeneous for d"),
                )?;
                let got = lpo_srt3_decode(&s, h[0]);
                check(
                    got.answer == want && !got.pre_violation,
                    format!("srt3 {flip:?}: decoded {got:?}"),
                )?;
                cases += 1;
            }
        }
    }
    Ok(format!(
        "{cases} decodings across 52 instances, all correct"
    ))
}

fn words(max_len: u32, max_mark: u32) -> impl Iterator<Item = CfiWord> {
    let base = u64::from(max_mark) + 1;
    (0..=max_len).flat_map(move |len| {
        (0..base.pow(len)).map(move |idx| {
            CfiWord::new(
                (0..len)
                    .rev()
                    .map(|i| (idx / base.pow(i) % base) as u32)
                    .collect(),
            )
        })
    })
}

fn cfi_calculus() -> Outcome {
    let mut bars = 0;
    for sigma in words(5, 4) {
        let oracle = common::bar_oracle(sigma.entries());
        check(
            cfi_bar(&sigma).entries() == oracle.as_slice(),
            format!("bar of {sigma}"),
        )?;
        bars += 1;
    }
    let mut meets = 0;
    for p in words(6, 4) {
        for k in 0..=5u32 {
            let out = cfi_meet_tail(&p, k);
            for n in 0..12 {
                let want = p.psi_contains(n) && n > k;
                check(
                    out.psi_contains(n) == want,
                    format!("meet {p} with k={k} at {n}"),
                )?;
            }
            let mut comp = cfi_psi(&p);
            comp.extend(0..=k);
            check(cfi_psi(&out) == comp, format!("meet {p} with k={k}"))?;
            meets += 1;
        }
    }
    let mut relabels = 0;
    for sigma in words(4, 3) {
        let shift = sigma.colors().iter().next_back().map_or(0, |&m| m + 1);
        let bar = cfi_bar(&sigma);
        for p in words(4, 3) {
            let out = cfi_relabel(&p, &sigma);
            check(
                out.entries().starts_with(bar.entries()),
                format!("{p} / {sigma}"),
            )?;
            for m in 0..8 {
                check(
                    out.psi_contains(m + shift) == p.psi_contains(m),
                    format!("relabel {p} under {sigma} at {m}"),
                )?;
            }
            relabels += 1;
        }
    }
    Ok(format!(
        "bar {bars} words, meet-tail {meets} cases, relabel {relabels} pairs"
    ))
}

fn witness_kind(psi: &PsiTable) -> bool {
    matches!(
        find_star_witness(
            psi,
            psi.n_colors() as usize,
            EscapeMode::Inclusive,
            10_000_000
        ),
        WitnessSearch::Found { .. }
    )
}

fn symmetry_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let shapes = [[2u32, 2], [2, 3], [3, 2], [3, 3]];
    let mut sets = 0;
    for _ in 0..1000 {
        let d = dims(&shapes[rng.gen_range(0..shapes.len())]);
        let n = rng.gen_range(2..=(d.cells() as u32).min(7));
        let psi = common::random_table(&d, n, 0.3, &mut rng);
        let g = Symmetry::random(&d, n, &mut rng);
        let moved = g.apply(&psi).map_err(|e| e.to_string())?;
        for s in all_sets(n) {
            check(
                star_holds_for(&psi, &s, EscapeMode::Inclusive).unwrap()
                    == star_holds_for(&moved, &g.apply_colors(&s), EscapeMode::Inclusive).unwrap(),
                format!("(*) changed under symmetry on {s:?}"),
            )?;
            sets += 1;
        }
        check(
            witness_kind(&psi) == witness_kind(&moved),
            "verdict changed under symmetry",
        )?;
        let a = canonicalize(&psi).unwrap();
        let b = canonicalize(&moved).unwrap();
        check(
            a.encoding == b.encoding,
            "canonical forms differ within an orbit",
        )?;
        let again = canonicalize(&a.table).unwrap();
        check(
            again.encoding == a.encoding && again.table == a.table,
            "canonicalize is not idempotent",
        )?;
    }
    Ok(format!(
        "1000 actions, {sets} color sets, verdicts and canonical forms unchanged"
    ))
}

fn main() {
    let wanted: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let run = |id: &str| wanted.is_empty() || wanted.iter().any(|w| id.starts_with(w.as_str()));

    let mut times = None;
    let mut failed = 0;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut report = |id: &str, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !run(id) {
            return;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let wall = secs(start.elapsed());
        match outcome {
            Ok(detail) => println!("criterion {id:<3} PASS  {name}: {detail} [{wall}]"),
            // a speedup cannot be observed with fewer cores than workers
            Err(detail) if id == "2s" && cores < 4 => println!(
                "criterion {id:<3} FAIL  {name}: {detail} [{wall}] (host has {cores} core(s); not counted in the exit status)"
            ),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:<3} FAIL  {name}: {detail} [{wall}]");
            }
        }
    };

    report("1", "grid check", &mut grid_check);
    report("2", "pairing sweep", &mut || pairing_sweep(&mut times));
    report("2s", "pairing sweep speedup", &mut || sweep_speedup(&times));
    report("3", "oracle equivalence", &mut oracle_equivalence);
    report("4", "small-case refutations", &mut small_refutations);
    report("5", "negative control", &mut negative_control);
    report("6", "cascade correctness", &mut cascade_correctness);
    report("7", "product round trip", &mut product_round_trip);
    report("8", "LPO codings", &mut lpo_codings);
    report("9", "CFI calculus", &mut cfi_calculus);
    report("10", "symmetry invariance", &mut symmetry_invariance);

    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
