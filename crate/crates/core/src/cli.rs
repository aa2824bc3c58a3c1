//! Command-line front end. `main` parses arguments and calls [`run`].

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::covering::{
    find_star_witness, singleton_witness, star_holds_for, Dims, EscapeMode, PsiTable,
    SingletonStrategy, WitnessSearch,
};
use crate::error::{Error, Result};
use crate::problems::{cfi_bar, cfi_psi, CfiWord, LpoInstance};
use crate::reductions::{
    trace_cascade, trace_cfi_meet_tail, trace_cfi_relabel, trace_dchar, trace_dwub_cfi,
    trace_lpo_balanced, trace_lpo_srt3, trace_lpo_wub, trace_product, trace_wub_merge,
    ReductionTrace,
};
use crate::search::{
    bad_collection_census, enumerate_psis, raw_cap_from_env, threshold_scan, verify_nonreduction,
    SearchConfig, TableConstraints, Verdict,
};
use crate::streams::{EvpStream, StableColoring, StepFunction};

#[derive(Debug, Parser)]
#[command(
    name = "rtwl",
    version,
    about = "Covering checks, non-reducibility sweeps and reduction traces"
)]
pub struct Cli {
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Leave out the timing field so identical runs give identical bytes.
    #[arg(long, global = true)]
    pub no_timing: bool,
    /// Exit nonzero unless the outcome equals this value.
    #[arg(long, global = true)]
    pub expect: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Md,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct SweepArgs {
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Cap on the raw table space (default from RTWL_BUDGET_CELLS).
    #[arg(long)]
    pub raw_cap: Option<u128>,
    /// Search nodes per candidate table.
    #[arg(long, default_value_t = 10_000_000)]
    pub node_budget: u64,
    /// Seconds before the sweep gives up.
    #[arg(long)]
    pub wall_clock: Option<u64>,
    /// Random singleton tables checked when that branch is sampled.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Count an undefined covered cell as not escaping.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Subcommand, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Search a grid table for a (∗)-witness.
    Star {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        max_size: Option<usize>,
        #[arg(long)]
        strict: bool,
        /// Color count, if larger than the largest entry plus one.
        #[arg(long)]
        colors: Option<u32>,
        #[arg(long, default_value_t = 10_000_000)]
        node_budget: u64,
    },
    /// Build the two-color witness of a singleton argument.
    Witness {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "k1")]
        strategy: String,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        colors: Option<u32>,
    },
    /// Case split over every candidate table for dims and a color count.
    Verify {
        #[arg(long, value_parser = parse_dims)]
        dims: Dims,
        #[arg(long)]
        colors: u32,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Bad-collection census over every pairing of a grid.
    Census {
        #[arg(long, value_parser = parse_dims, default_value = "4,4")]
        dims: Dims,
        /// Skip the brute-force cross-check.
        #[arg(long)]
        no_cross_check: bool,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Verify a range of color counts and report the least refuted one.
    Scan {
        #[arg(long, value_parser = parse_dims)]
        dims: Dims,
        /// Inclusive range `lo..hi`.
        #[arg(long, value_parser = parse_range)]
        colors: (u32, u32),
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Run a reduction on an instance and check the decoded solution.
    Reduce(ReduceArgs),
    /// The least extension evening out every marked color.
    Bar { word: String },
    /// Colors with an odd mark count (the complement of ψ).
    Psi { word: String },
    /// List candidate tables.
    Enumerate {
        #[arg(long, value_parser = parse_dims)]
        dims: Dims,
        #[arg(long)]
        colors: u32,
        #[arg(long)]
        total: bool,
        #[arg(long)]
        no_singleton: bool,
        #[arg(long)]
        max_fiber: Option<usize>,
        /// Keep symmetric copies.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        raw_cap: Option<u128>,
        /// Only print the count.
        #[arg(long)]
        count: bool,
    },
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct ReduceArgs {
    #[arg(value_enum)]
    pub name: ReductionName,
    /// Instance file, or a literal when no such file exists.
    #[arg(long = "in")]
    pub input: Option<String>,
    #[arg(long, value_parser = parse_dims)]
    pub ks: Option<Dims>,
    /// Position of the first 1 in the LPO instance; omit for all zeros.
    #[arg(long)]
    pub flip: Option<usize>,
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub k: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionName {
    Cascade,
    Product,
    LpoBalanced,
    LpoSrt3,
    LpoWub,
    WubMerge,
    Dchar,
    DwubCfi,
    CfiRelabel,
    CfiMeetTail,
}

fn parse_dims(s: &str) -> std::result::Result<Dims, String> {
    let ks = s
        .split(',')
        .map(|t| t.trim().parse::<u32>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Dims::new(ks).map_err(|e| e.to_string())
}

fn parse_range(s: &str) -> std::result::Result<(u32, u32), String> {
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (s, s),
    };
    let lo: u32 = lo.trim().parse().map_err(|e| format!("{lo:?}: {e}"))?;
    let hi: u32 = hi.trim().parse().map_err(|e| format!("{hi:?}: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {s}"));
    }
    Ok((lo, hi))
}

/// Everything that determines a run, embedded in each report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub format: Format,
    pub expect: Option<String>,
    pub raw_cap: String,
}

/// A finished command: the config, the result data, a one-word outcome that
/// `--expect` compares against, and whether the command itself succeeded.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config: RunConfig,
    pub outcome: String,
    pub result: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Value>,
    #[serde(skip)]
    pub ok: bool,
}

fn read_input(arg: &str) -> Result<String> {
    let path = Path::new(arg);
    if path.is_file() {
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    } else {
        Ok(arg.to_string())
    }
}

fn read_grid(path: &Path, colors: Option<u32>) -> Result<PsiTable> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    PsiTable::from_grid_text(&text, colors)
}

fn mode(strict: bool) -> EscapeMode {
    if strict {
        EscapeMode::Strict
    } else {
        EscapeMode::Inclusive
    }
}

fn search_config(sweep: &SweepArgs, raw_cap: u128, cross_check: bool) -> SearchConfig {
    SearchConfig {
        mode: mode(sweep.strict),
        raw_cap: sweep.raw_cap.unwrap_or(raw_cap),
        node_budget: sweep.node_budget,
        workers: sweep.workers,
        singleton_samples: sweep.samples,
        seed: sweep.seed,
        cross_check,
        wall_clock_cap: sweep.wall_clock,
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn json_field<T: serde::de::DeserializeOwned>(v: &Value, key: &str) -> Result<T> {
    let field = v
        .get(key)
        .ok_or_else(|| Error::InvalidArgument(format!("instance is missing `{key}`")))?;
    serde_json::from_value(field.clone())
        .map_err(|e| Error::InvalidArgument(format!("`{key}`: {e}")))
}

fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("instance JSON: {e}")))
}

fn lpo_from(args: &ReduceArgs, v: Option<&Value>) -> Result<LpoInstance> {
    if let Some(n) = args.flip {
        return Ok(LpoInstance::flip_at(n));
    }
    match v.and_then(|v| v.get("lpo").or_else(|| v.get("flip").map(|_| v))) {
        Some(inst) => serde_json::from_value(inst.clone())
            .map_err(|e| Error::InvalidArgument(format!("LPO instance: {e}"))),
        None => Ok(LpoInstance::zeros()),
    }
}

fn reduce(args: &ReduceArgs) -> Result<ReductionTrace> {
    let input = args.input.as_deref().map(read_input).transpose()?;
    let needs = |what: &str| Error::InvalidArgument(format!("`--in` must give {what}"));
    match args.name {
        ReductionName::Cascade => {
            let ks = args
                .ks
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("`--ks` is required".into()))?;
            let text = input.ok_or_else(|| needs("a stream"))?;
            let n = 1 + ks.ks().iter().map(|k| k - 1).sum::<u32>();
            let stream: EvpStream = text.trim().parse()?;
            trace_cascade(&stream.with_alphabet(n)?, ks.ks())
        }
        ReductionName::Product => {
            let ks = args
                .ks
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("`--ks` is required".into()))?;
            let text = input.ok_or_else(|| needs("streams"))?;
            let streams = text
                .split(|c: char| c == ';' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .zip(ks.ks())
                .map(|(t, &k)| t.parse::<EvpStream>()?.with_alphabet(k))
                .collect::<Result<Vec<_>>>()?;
            if streams.len() != ks.arity() {
                return Err(Error::InvalidArgument(format!(
                    "{} streams for {} factors",
                    streams.len(),
                    ks.arity()
                )));
            }
            trace_product(&streams)
        }
        ReductionName::LpoBalanced => {
            let v = input.as_deref().map(parse_json).transpose()?;
            trace_lpo_balanced(&lpo_from(args, v.as_ref())?)
        }
        ReductionName::LpoWub => {
            let v = input.as_deref().map(parse_json).transpose()?;
            trace_lpo_wub(&lpo_from(args, v.as_ref())?)
        }
        ReductionName::LpoSrt3 => {
            let v = parse_json(&input.ok_or_else(|| needs("a JSON instance"))?)?;
            let c: StableColoring = json_field(&v, "coloring")?;
            trace_lpo_srt3(&lpo_from(args, Some(&v))?, &c)
        }
        ReductionName::WubMerge => {
            let v = parse_json(&input.ok_or_else(|| needs("a JSON instance"))?)?;
            let c: StableColoring = json_field(&v, "c")?;
            let d: StableColoring = json_field(&v, "d")?;
            trace_wub_merge(&c, json_field(&v, "i_c")?, &d, json_field(&v, "i_d")?)
        }
        ReductionName::Dchar => {
            let v = parse_json(&input.ok_or_else(|| needs("a JSON instance"))?)?;
            let c: StableColoring = json_field(&v, "coloring")?;
            let ell: StepFunction = json_field(&v, "ell")?;
            trace_dchar(&lpo_from(args, Some(&v))?, &c, &ell)
        }
        ReductionName::DwubCfi => {
            let v = parse_json(&input.ok_or_else(|| needs("a JSON instance"))?)?;
            let c: StableColoring = json_field(&v, "coloring")?;
            let ell: StepFunction = json_field(&v, "ell")?;
            trace_dwub_cfi(&c, &ell)
        }
        ReductionName::CfiRelabel => {
            let p: CfiWord = args.p.as_deref().unwrap_or("").parse()?;
            let sigma: CfiWord = args.sigma.as_deref().unwrap_or("").parse()?;
            Ok(trace_cfi_relabel(&p, &sigma))
        }
        ReductionName::CfiMeetTail => {
            let p: CfiWord = args.p.as_deref().unwrap_or("").parse()?;
            let k = args
                .k
                .ok_or_else(|| Error::InvalidArgument("`--k` is required".into()))?;
            Ok(trace_cfi_meet_tail(&p, k))
        }
    }
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> Result<Report> {
    let raw_cap = raw_cap_from_env()?;
    let start = Instant::now();
    let (outcome, result, ok) = match &cli.command {
        Command::Star {
            grid,
            max_size,
            strict,
            colors,
            node_budget,
        } => {
            let psi = read_grid(grid, *colors)?;
            let max = max_size.unwrap_or(psi.n_colors() as usize);
            let found = find_star_witness(&psi, max, mode(*strict), *node_budget);
            let (outcome, verified) = match &found {
                WitnessSearch::Found { witness } => (
                    "found",
                    Some(star_holds_for(&psi, &witness.as_set(), mode(*strict))?),
                ),
                WitnessSearch::NoneUpTo { .. } => ("none", None),
                WitnessSearch::BudgetExhausted { .. } => ("budget-exhausted", None),
            };
            let ok = verified != Some(false);
            let result = json!({
                "dims": psi.dims(),
                "colors": psi.n_colors(),
                "mode": mode(*strict),
                "search": found,
                "verified": verified,
            });
            (outcome.to_string(), result, ok)
        }
        Command::Witness {
            grid,
            strategy,
            strict,
            colors,
        } => {
            let psi = read_grid(grid, *colors)?;
            let strategy: SingletonStrategy = strategy.parse()?;
            let w = singleton_witness(&psi, strategy, mode(*strict))?;
            let outcome = if w.is_some() { "found" } else { "none" };
            let result = json!({ "strategy": strategy, "witness": w });
            (outcome.to_string(), result, true)
        }
        Command::Verify {
            dims,
            colors,
            sweep,
        } => {
            let cfg = search_config(sweep, raw_cap, false);
            match verify_nonreduction(dims, *colors, &cfg) {
                Ok(run) => (run.report.verdict.to_string(), to_value(&run.report), true),
                Err(e @ Error::Budget { .. }) => (
                    Verdict::Unknown.to_string(),
                    json!({ "dims": dims, "colors": colors, "verdict": Verdict::Unknown, "note": e.to_string() }),
                    true,
                ),
                Err(e) => return Err(e),
            }
        }
        Command::Census {
            dims,
            no_cross_check,
            sweep,
        } => {
            let cfg = search_config(sweep, raw_cap, !no_cross_check);
            let (census, pairings, _) = bad_collection_census(dims, &cfg)?;
            let mut failed = census.disagreements > 0 || !census.over_limit.is_empty();
            if dims.ks() == [4, 4] {
                failed |= census.max_bad > census.limit;
            }
            let everyone_has_good = census.histogram.last().is_none_or(|&all_bad| all_bad == 0);
            failed |= !everyone_has_good;
            let outcome = if failed { "fail" } else { "pass" };
            let result = json!({ "dims": dims, "pairings": pairings, "census": census });
            (outcome.to_string(), result, true)
        }
        Command::Scan {
            dims,
            colors,
            sweep,
        } => {
            let cfg = search_config(sweep, raw_cap, false);
            let report = threshold_scan(dims, colors.0..=colors.1, &cfg)?;
            let outcome = report
                .least_refuted
                .map_or_else(|| "none".to_string(), |n| n.to_string());
            (outcome, to_value(&report), true)
        }
        Command::Reduce(args) => {
            let trace = reduce(args)?;
            let outcome = if trace.valid { "valid" } else { "invalid" };
            (outcome.to_string(), to_value(&trace), trace.valid)
        }
        Command::Bar { word } => {
            let w: CfiWord = word.parse()?;
            let out = cfi_bar(&w);
            (
                out.to_string(),
                json!({ "word": w.to_string(), "bar": out.to_string() }),
                true,
            )
        }
        Command::Psi { word } => {
            let w: CfiWord = word.parse()?;
            let odd: BTreeSet<u32> = cfi_psi(&w);
            let outcome = odd
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(",");
            (
                outcome,
                json!({ "word": w.to_string(), "odd_colors": odd }),
                true,
            )
        }
        Command::Enumerate {
            dims,
            colors,
            total,
            no_singleton,
            max_fiber,
            all,
            raw_cap: cap,
            count,
        } => {
            let mut cons = TableConstraints {
                total: *total,
                max_fiber: *max_fiber,
                ..Default::default()
            };
            if *no_singleton {
                cons = cons.no_singleton();
            }
            let tables = enumerate_psis(dims, *colors, cons, !all, cap.unwrap_or(raw_cap))?;
            let listed: Vec<Value> = if *count {
                Vec::new()
            } else {
                tables
                    .iter()
                    .map(|t| {
                        json!(t
                            .to_grid_text()
                            .unwrap_or_else(|_| format!("{:?}", t.cells())))
                    })
                    .collect()
            };
            let result = json!({ "count": tables.len(), "tables": listed });
            (tables.len().to_string(), result, true)
        }
    };
    let ok = ok && cli.expect.as_ref().is_none_or(|e| *e == outcome);
    if let (Some(e), Command::Verify { .. }) = (&cli.expect, &cli.command) {
        e.parse::<Verdict>()?;
    }
    let timing = (!cli.no_timing).then(|| json!({ "wall_ms": start.elapsed().as_millis() }));
    Ok(Report {
        config: RunConfig {
            command: cli.command.clone(),
            format: cli.format,
            expect: cli.expect.clone(),
            raw_cap: raw_cap.to_string(),
        },
        outcome,
        result,
        timing,
        ok,
    })
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        Value::Array(items) if items.iter().any(|i| i.is_object() || i.is_array()) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), v, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders a report in the requested format.
pub fn render(report: &Report, format: Format) -> String {
    let value = to_value(report);
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&value).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Csv | Format::Md => {
            let mut rows = Vec::new();
            flatten("", &value, &mut rows);
            let mut out = String::new();
            if format == Format::Csv {
                out.push_str("key,value\n");
                for (k, v) in rows {
                    writeln!(out, "{},{}", csv_field(&k), csv_field(&v)).expect("string write");
                }
            } else {
                out.push_str("| key | value |\n|---|---|\n");
                for (k, v) in rows {
                    let v = v.replace('|', "\\|").replace('\n', "<br>");
                    writeln!(out, "| {k} | {v} |").expect("string write");
                }
            }
            out
        }
    }
}
