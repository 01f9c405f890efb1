//! Monte Carlo experiments over seeded channel ensembles.
//!
//! Trial `t` of every cell uses the channel drawn from seed `base + t`, so a
//! given trial sees the same channel in every method and at every power.
//! Trials run in parallel but are aggregated in trial order, which keeps the
//! output bit-identical for any worker count.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bfgs::BracketMode;
use crate::channel::{draw_channel, ChannelPair};
use crate::driver::{self, OracleConfig, SolveConfig};
use crate::error::{Error, Result};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "ROTAPREC_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RotationBfgs,
    Gsvd,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::RotationBfgs => "rotation-bfgs",
            Method::Gsvd => "gsvd",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rotation-bfgs" | "bfgs" => Ok(Method::RotationBfgs),
            "gsvd" => Ok(Method::Gsvd),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::argument(format!(
                "unknown method {other:?} (expected rotation-bfgs, gsvd or oracle)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub nt: Vec<usize>,
    pub nr: Vec<usize>,
    pub ne: Vec<usize>,
    pub pt: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub eps1: f64,
    pub eps2: f64,
    pub max_iters: usize,
    pub bracket_mode: BracketMode,
    pub oracle: OracleConfig,
    /// Record wall-clock per trial. Off by default so that outputs are reproducible.
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn new(
        nt: usize,
        nr: Vec<usize>,
        ne: Vec<usize>,
        pt: Vec<f64>,
        trials: usize,
        seed: u64,
    ) -> Self {
        Self {
            nt: vec![nt],
            nr,
            ne,
            pt,
            trials,
            seed,
            methods: vec![Method::RotationBfgs, Method::Gsvd],
            eps1: 1e-4,
            eps2: 1e-4,
            max_iters: 500,
            bracket_mode: BracketMode::Verbatim,
            oracle: OracleConfig::default(),
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::argument("trials must be at least 1"));
        }
        for (name, list) in [("nt", &self.nt), ("nr", &self.nr), ("ne", &self.ne)] {
            if list.is_empty() || list.contains(&0) {
                return Err(Error::argument(format!(
                    "{name} values must be non-empty and ≥ 1"
                )));
            }
        }
        if self.pt.is_empty() || self.pt.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::argument(
                "Pt values must be non-empty, finite and ≥ 0",
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::argument("at least one method is required"));
        }
        if self.methods.contains(&Method::Oracle) && self.nt.iter().any(|&n| n > 3) {
            return Err(Error::argument("the oracle method supports nt ≤ 3 only"));
        }
        SolveConfig {
            eps1: self.eps1,
            eps2: self.eps2,
            max_iters: self.max_iters,
            ..SolveConfig::new(1.0)
        }
        .validate()
    }

    fn solve_config(&self, pt: f64) -> SolveConfig {
        let mut c = SolveConfig::new(pt).with_bracket_mode(self.bracket_mode);
        c.eps1 = self.eps1;
        c.eps2 = self.eps2;
        c.max_iters = self.max_iters;
        c
    }

    /// Seed of trial `t`.
    pub fn trial_seed(&self, t: usize) -> u64 {
        self.seed.wrapping_add(t as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub nt: usize,
    pub nr: usize,
    pub ne: usize,
    pub pt: f64,
    pub method: Method,
    pub mean_rate: f64,
    pub stderr: f64,
    pub mean_iters: f64,
    pub mean_ms: f64,
    pub failures: usize,
    pub trials: usize,
}

/// Relative gain of rotation-BFGS over the baselines, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub nt: usize,
    pub nr: usize,
    pub ne: usize,
    pub pt: f64,
    /// Over GSVD; `None` when either mean is missing or the GSVD mean is 0.
    pub eta_g: Option<f64>,
    /// Over alternating-optimization water-filling, which is not run here.
    pub eta_a: Option<f64>,
}

/// Whether a method's mean rate grows with `Pt` for one antenna setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTrend {
    pub nt: usize,
    pub nr: usize,
    pub ne: usize,
    pub method: Method,
    /// Non-decreasing within two standard errors at every step.
    pub monotone: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
    pub improvements: Vec<Improvement>,
    #[serde(default)]
    pub trends: Vec<PowerTrend>,
}

impl ExperimentResult {
    pub fn cell(
        &self,
        nt: usize,
        nr: usize,
        ne: usize,
        pt: f64,
        method: Method,
    ) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.nt == nt && c.nr == nr && c.ne == ne && c.pt == pt && c.method == method)
    }

    pub fn improvement(&self, nt: usize, nr: usize, ne: usize, pt: f64) -> Option<&Improvement> {
        self.improvements
            .iter()
            .find(|c| c.nt == nt && c.nr == nr && c.ne == ne && c.pt == pt)
    }
}

/// Rayon pool sized by `ROTAPREC_THREADS`, or by the machine when unset.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                Error::argument(format!(
                    "{THREADS_ENV} must be a positive integer, got {v:?}"
                ))
            })?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::argument(format!("cannot start worker pool: {e}")))
}

/// Outcome of one method on one channel: rate, iterations, milliseconds.
type TrialOutcome = std::result::Result<(f64, usize, f64), ()>;

fn run_method(ch: &ChannelPair, pt: f64, method: Method, spec: &ExperimentSpec) -> TrialOutcome {
    if pt == 0.0 {
        return Ok((0.0, 0, 0.0));
    }
    let start = Instant::now();
    let res = match method {
        Method::RotationBfgs => {
            driver::solve(ch, &spec.solve_config(pt)).map(|(s, _)| (s.rate, s.iterations))
        }
        Method::Gsvd => driver::gsvd_baseline(ch, pt).map(|s| (s.rate, 0)),
        Method::Oracle => driver::grid_oracle(ch, pt, &spec.oracle).map(|r| (r, 0)),
    };
    let ms = if spec.timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    match res {
        Ok((rate, iters)) if rate.is_finite() => Ok((rate, iters, ms)),
        _ => Err(()),
    }
}

/// All methods at all powers for one trial, indexed `[pt][method]`.
fn run_trial(
    spec: &ExperimentSpec,
    nt: usize,
    nr: usize,
    ne: usize,
    t: usize,
) -> Vec<Vec<TrialOutcome>> {
    let ch = match draw_channel(nt, nr, ne, spec.trial_seed(t)) {
        Ok(ch) => ch,
        Err(_) => return vec![vec![Err(()); spec.methods.len()]; spec.pt.len()],
    };
    spec.pt
        .iter()
        .map(|&pt| {
            spec.methods
                .iter()
                .map(|&m| run_method(&ch, pt, m, spec))
                .collect()
        })
        .collect()
}

fn aggregate(outcomes: &[&TrialOutcome]) -> (f64, f64, f64, f64, usize) {
    let ok: Vec<(f64, usize, f64)> = outcomes.iter().filter_map(|o| o.ok()).collect();
    let failures = outcomes.len() - ok.len();
    let n = ok.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN, failures);
    }
    let nf = n as f64;
    let mean = ok.iter().map(|o| o.0).sum::<f64>() / nf;
    let stderr = if n > 1 {
        let var = ok.iter().map(|o| (o.0 - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        (var / nf).sqrt()
    } else {
        0.0
    };
    let iters = ok.iter().map(|o| o.1 as f64).sum::<f64>() / nf;
    let ms = ok.iter().map(|o| o.2).sum::<f64>() / nf;
    (mean, stderr, iters, ms, failures)
}

/// `(nt, nr, ne, Pt bits)`
type CellKey = (usize, usize, usize, u64);

fn improvements(cells: &[CellResult]) -> Vec<Improvement> {
    // (rotation-BFGS mean, GSVD mean, Pt)
    let mut groups: BTreeMap<CellKey, (Option<f64>, Option<f64>, f64)> = BTreeMap::new();
    for c in cells {
        let e = groups
            .entry((c.nt, c.nr, c.ne, c.pt.to_bits()))
            .or_insert((None, None, c.pt));
        match c.method {
            Method::RotationBfgs => e.0 = Some(c.mean_rate),
            Method::Gsvd => e.1 = Some(c.mean_rate),
            Method::Oracle => {}
        }
    }
    let mut out: Vec<Improvement> = groups
        .into_iter()
        .map(|((nt, nr, ne, _), (r, g, pt))| Improvement {
            nt,
            nr,
            ne,
            pt,
            eta_g: match (r, g) {
                (Some(r), Some(g)) if g != 0.0 && r.is_finite() && g.is_finite() => {
                    Some((r - g) / g * 100.0)
                }
                _ => None,
            },
            eta_a: None,
        })
        .collect();
    out.sort_by(|a, b| {
        (a.nt, a.nr, a.ne)
            .cmp(&(b.nt, b.nr, b.ne))
            .then(a.pt.total_cmp(&b.pt))
    });
    out
}

/// Run every `(nt, nr, ne)` cell at every power with every method.
///
/// Cells are ordered by `nt`, `nr`, `ne`, then the requested `Pt` order, then
/// method order. A cell with more than 1% failed trials fails the run.
pub fn run_table(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let pool = thread_pool()?;
    let settings: Vec<(usize, usize, usize)> = spec
        .nt
        .iter()
        .flat_map(|&nt| {
            spec.nr
                .iter()
                .flat_map(move |&nr| spec.ne.iter().map(move |&ne| (nt, nr, ne)))
        })
        .collect();
    let jobs: Vec<(usize, usize, usize, usize)> = settings
        .iter()
        .flat_map(|&(nt, nr, ne)| (0..spec.trials).map(move |t| (nt, nr, ne, t)))
        .collect();
    let outcomes: Vec<Vec<Vec<TrialOutcome>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(nt, nr, ne, t)| run_trial(spec, nt, nr, ne, t))
            .collect()
    });

    let mut cells = Vec::new();
    for (s, &(nt, nr, ne)) in settings.iter().enumerate() {
        let block = &outcomes[s * spec.trials..(s + 1) * spec.trials];
        for (pi, &pt) in spec.pt.iter().enumerate() {
            for (mi, &method) in spec.methods.iter().enumerate() {
                let column: Vec<&TrialOutcome> = block.iter().map(|o| &o[pi][mi]).collect();
                let (mean_rate, stderr, mean_iters, mean_ms, failures) = aggregate(&column);
                if failures * 100 > spec.trials {
                    return Err(Error::FailureThreshold {
                        cell: format!("nt={nt} nr={nr} ne={ne} Pt={pt} method={method}"),
                        failures,
                        trials: spec.trials,
                    });
                }
                cells.push(CellResult {
                    nt,
                    nr,
                    ne,
                    pt,
                    method,
                    mean_rate,
                    stderr,
                    mean_iters,
                    mean_ms,
                    failures,
                    trials: spec.trials,
                });
            }
        }
    }
    let improvements = improvements(&cells);
    Ok(ExperimentResult {
        cells,
        improvements,
        trends: Vec::new(),
    })
}

/// [`run_table`] with cells ordered by `Pt` ascending, plus a monotonicity
/// flag per method and antenna setting.
pub fn run_power_sweep(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let mut spec = spec.clone();
    spec.pt.sort_by(f64::total_cmp);
    spec.pt.dedup();
    let mut result = run_table(&spec)?;
    result.cells.sort_by(|a, b| a.pt.total_cmp(&b.pt));

    let mut series: BTreeMap<(usize, usize, usize, Method), Vec<&CellResult>> = BTreeMap::new();
    for c in &result.cells {
        series
            .entry((c.nt, c.nr, c.ne, c.method))
            .or_default()
            .push(c);
    }
    result.trends = series
        .into_iter()
        .map(|((nt, nr, ne, method), cs)| PowerTrend {
            nt,
            nr,
            ne,
            method,
            monotone: cs
                .windows(2)
                .all(|w| w[1].mean_rate >= w[0].mean_rate - 2.0 * w[0].stderr.max(w[1].stderr)),
        })
        .collect();
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Table,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "table" => Ok(OutputFormat::Table),
            other => Err(Error::argument(format!(
                "unknown format {other:?} (expected csv, json or table)"
            ))),
        }
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "nt",
    "nr",
    "ne",
    "Pt",
    "method",
    "mean_rate",
    "stderr",
    "mean_iters",
    "mean_ms",
    "failures",
];

fn render_csv(result: &ExperimentResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for c in &result.cells {
        w.write_record([
            c.nt.to_string(),
            c.nr.to_string(),
            c.ne.to_string(),
            c.pt.to_string(),
            c.method.to_string(),
            c.mean_rate.to_string(),
            c.stderr.to_string(),
            c.mean_iters.to_string(),
            c.mean_ms.to_string(),
            c.failures.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn sorted_unique<T: Copy + PartialOrd>(it: impl Iterator<Item = T>) -> Vec<T> {
    let mut v: Vec<T> = Vec::new();
    for x in it {
        if !v.contains(&x) {
            v.push(x);
        }
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("comparable"));
    v
}

/// Grids with `nr` down the side and `ne` across, one per `(nt, Pt, method)`.
fn render_table(result: &ExperimentResult) -> String {
    let mut out = String::new();
    let nts = sorted_unique(result.cells.iter().map(|c| c.nt));
    let pts = sorted_unique(result.cells.iter().map(|c| c.pt));
    let methods = sorted_unique(result.cells.iter().map(|c| c.method));
    let nrs = sorted_unique(result.cells.iter().map(|c| c.nr));
    let nes = sorted_unique(result.cells.iter().map(|c| c.ne));

    let grid = |title: String, value: &dyn Fn(usize, usize) -> Option<f64>, out: &mut String| {
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:>8}", "nr\\ne");
        for ne in &nes {
            let _ = write!(out, "{ne:>8}");
        }
        out.push('\n');
        for &nr in &nrs {
            let _ = write!(out, "{nr:>8}");
            for &ne in &nes {
                match value(nr, ne) {
                    Some(v) if v.is_finite() => {
                        let _ = write!(out, "{v:>8.2}");
                    }
                    _ => {
                        let _ = write!(out, "{:>8}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out.push('\n');
    };

    for &nt in &nts {
        for &pt in &pts {
            for &m in &methods {
                grid(
                    format!("{m}  nt = {nt}  Pt = {pt}  (bps/Hz)"),
                    &|nr, ne| result.cell(nt, nr, ne, pt, m).map(|c| c.mean_rate),
                    &mut out,
                );
            }
            if result
                .improvements
                .iter()
                .any(|i| i.nt == nt && i.pt == pt && i.eta_g.is_some())
            {
                grid(
                    format!("eta_g  nt = {nt}  Pt = {pt}  (%)"),
                    &|nr, ne| result.improvement(nt, nr, ne, pt).and_then(|i| i.eta_g),
                    &mut out,
                );
            }
        }
    }
    out
}

pub fn render(result: &ExperimentResult, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => render_csv(result),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(result).expect("result serializes");
            s.push('\n');
            s
        }
        OutputFormat::Table => render_table(result),
    }
}

/// Write `result` to `path` (`-` for stdout).
pub fn emit(result: &ExperimentResult, format: OutputFormat, path: &str) -> Result<()> {
    crate::io::write_output(path, &render(result, format))
}
