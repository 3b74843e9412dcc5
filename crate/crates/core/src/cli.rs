//! Configuration, file formats and the `gen` / `run` / `eval` / `bench` commands.
//!
//! Configuration is a flat set of keys. Values come from built-in defaults,
//! then an optional `key = value` file (`#` starts a comment), then
//! command-line flags named after the keys.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::causal::{identify_causality, CausalAdjacency, CausalDigraph};
use crate::engine::{calibrate_tau_unit, Engine, EngineConfig, StepOutput};
use crate::error::{Error, Result};
use crate::ica::fixed_point_ica;
use crate::metrics::{mae, rmse, sid, shd, MetricReport, SegmentMetrics};
use crate::synth::{generate_stream, GenConfig, Segment};

/// How the regime-fit threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSetting {
    Fixed(f64),
    /// Calibrated on the first third of the input stream.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gen: GenConfig,
    pub engine: EngineConfig,
    pub tau: TauSetting,
    pub tau_quantile: f64,
    pub tau_margin: f64,
    /// Ticks between causal snapshots written by `run`.
    pub causal_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gen: GenConfig::default(),
            engine: EngineConfig::default(),
            tau: TauSetting::Auto,
            tau_quantile: 1.0,
            tau_margin: 2.0,
            causal_every: 25,
        }
    }
}

/// Every configuration key with a short description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("d", "number of variables in generated streams"),
    ("edge_density", "probability of each forward edge in a generated DAG"),
    ("weight_low", "smallest absolute edge weight"),
    ("weight_high", "largest absolute edge weight"),
    ("segment_len", "samples per generated segment"),
    ("sequence", "comma-separated cluster ids, e.g. 1,2,1"),
    ("ar_coeff_low", "lower bound of the log-variance AR coefficient"),
    ("ar_coeff_high", "upper bound of the log-variance AR coefficient"),
    ("ar_noise_var_low", "lower bound of the log-variance AR noise variance"),
    ("ar_noise_var_high", "upper bound of the log-variance AR noise variance"),
    ("redraw_ar", "draw new AR parameters for every segment (true/false)"),
    ("seed", "random seed for generation and the engine"),
    ("n_window", "sliding window length"),
    ("h", "embedding dimension"),
    ("mu", "forgetting factor in (0, 1]"),
    ("tau_unit", "fit threshold per variable and scored sample, or 'auto'"),
    ("tau_quantile", "quantile of calibration fit errors used by tau_unit=auto"),
    ("tau_margin", "multiplier applied to the calibrated quantile"),
    ("l_s", "forecast horizon in ticks"),
    ("edge_threshold", "absolute weight above which an edge is reported"),
    ("lm_damping_init", "initial Levenberg-Marquardt damping"),
    ("lm_damping_factor", "damping growth/shrink factor"),
    ("lm_max_iter", "Levenberg-Marquardt iteration budget"),
    ("lm_rel_tol", "relative cost reduction below which LM stops"),
    ("search_lm_iter", "LM budget per regime during a regime search"),
    ("ica_max_iter", "ICA iteration budget"),
    ("ica_tol", "ICA convergence tolerance"),
    ("identity_demixing", "ablation: identity demixing matrix (true/false)"),
    ("causal_every", "ticks between causal snapshots"),
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let g = &mut self.gen;
        let e = &mut self.engine;
        match key {
            "d" => g.d = parse(key, value)?,
            "edge_density" => g.edge_density = parse(key, value)?,
            "weight_low" => g.weight_range.0 = parse(key, value)?,
            "weight_high" => g.weight_range.1 = parse(key, value)?,
            "segment_len" => g.segment_len = parse(key, value)?,
            "sequence" => {
                g.sequence = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "ar_coeff_low" => g.ar_coeff_range.0 = parse(key, value)?,
            "ar_coeff_high" => g.ar_coeff_range.1 = parse(key, value)?,
            "ar_noise_var_low" => g.ar_noise_var_range.0 = parse(key, value)?,
            "ar_noise_var_high" => g.ar_noise_var_range.1 = parse(key, value)?,
            "redraw_ar" => g.redraw_ar_per_segment = parse_bool(key, value)?,
            "seed" => {
                g.seed = parse(key, value)?;
                e.seed = g.seed;
            }
            "n_window" => e.n_window = parse(key, value)?,
            "h" => e.h = parse(key, value)?,
            "mu" => e.mu = parse(key, value)?,
            "tau_unit" => {
                self.tau = if value.trim().eq_ignore_ascii_case("auto") {
                    TauSetting::Auto
                } else {
                    TauSetting::Fixed(parse(key, value)?)
                }
            }
            "tau_quantile" => self.tau_quantile = parse(key, value)?,
            "tau_margin" => self.tau_margin = parse(key, value)?,
            "l_s" => e.l_s = parse(key, value)?,
            "edge_threshold" => e.edge_threshold = parse(key, value)?,
            "lm_damping_init" => e.lm.damping_init = parse(key, value)?,
            "lm_damping_factor" => e.lm.damping_factor = parse(key, value)?,
            "lm_max_iter" => e.lm.max_iter = parse(key, value)?,
            "lm_rel_tol" => e.lm.rel_tol = parse(key, value)?,
            "search_lm_iter" => e.search_lm_iter = parse(key, value)?,
            "ica_max_iter" => e.ica.max_iter = parse(key, value)?,
            "ica_tol" => e.ica.tol = parse(key, value)?,
            "identity_demixing" => e.identity_demixing = parse_bool(key, value)?,
            "causal_every" => self.causal_every = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Defaults, then the file, then the overrides, then validation.
    pub fn from_sources(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            for (key, value) in parse_config_text(&text)? {
                cfg.set(&key, &value)?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        let mut engine = self.engine.clone();
        match self.tau {
            TauSetting::Fixed(t) => engine.tau_unit = t,
            TauSetting::Auto => {
                if !(0.0..=1.0).contains(&self.tau_quantile) || !(self.tau_margin > 0.0) {
                    return Err(Error::Config("tau_quantile must lie in [0, 1] and tau_margin be > 0".into()));
                }
            }
        }
        engine.validate()?;
        if self.causal_every == 0 {
            return Err(Error::Config("causal_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// `key = value` lines; blank lines and `#` comments are ignored.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
        let k = k.trim();
        if !CONFIG_KEYS.iter().any(|(name, _)| *name == k) {
            return Err(Error::Config(format!("line {}: unknown configuration key '{k}'", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Process exit code for an error: 2 for usage and input problems, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_)
        | Error::DimensionMismatch(_)
        | Error::Config(_)
        | Error::Io(_)
        | Error::NonFinite(_)
        | Error::IndexOutOfRange(_) => 2,
        Error::Degenerate(_) | Error::StructurallySingular | Error::Cyclic => 1,
    }
}

/// Decimal rendering with 17 significant digits.
pub fn format_sig17(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (16 - exp).clamp(0, 400) as usize;
    format!("{v:.decimals$}")
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput("adjacency matrix is not square".into()));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn edges_of(g: &CausalDigraph) -> Vec<[usize; 2]> {
    let d = g.dim();
    let mut out = Vec::new();
    for from in 0..d {
        for to in 0..d {
            if g.has_edge(from, to) {
                out.push([from, to]);
            }
        }
    }
    out
}

/// Write to `path.tmp` and rename into place once complete.
struct AtomicFile {
    tmp: PathBuf,
    target: PathBuf,
    out: BufWriter<File>,
}

impl AtomicFile {
    fn create(target: PathBuf) -> Result<Self> {
        let mut tmp = target.clone().into_os_string();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let file = File::create(&tmp).map_err(|e| Error::Io(format!("{}: {e}", target.display())))?;
        Ok(Self { tmp, target, out: BufWriter::new(file) })
    }

    fn commit(mut self) -> Result<()> {
        self.out.flush()?;
        fs::rename(&self.tmp, &self.target)?;
        Ok(())
    }

    fn abort(self) {
        let _ = fs::remove_file(&self.tmp);
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClusterRecord {
    id: usize,
    b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TruthRecord {
    seed: u64,
    d: usize,
    clusters: Vec<ClusterRecord>,
    segments: Vec<Segment>,
    config: GenConfig,
}

/// Write `<prefix>.csv` and `<prefix>.truth.json`. Both appear or neither does.
pub fn cmd_gen(cfg: &RunConfig, prefix: &Path) -> Result<()> {
    let (x, truth) = generate_stream(&cfg.gen)?;
    let d = x.nrows();
    let mut csv = AtomicFile::create(with_suffix(prefix, ".csv"))?;
    let mut tj = match AtomicFile::create(with_suffix(prefix, ".truth.json")) {
        Ok(f) => f,
        Err(e) => {
            csv.abort();
            return Err(e);
        }
    };
    let write = |csv: &mut AtomicFile, tj: &mut AtomicFile| -> Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=d).map(|i| format!("x{i}"))).collect();
        writeln!(csv.out, "{}", header.join(","))?;
        for t in 0..x.ncols() {
            let mut line = (t + 1).to_string();
            for i in 0..d {
                line.push(',');
                line.push_str(&format_sig17(x[(i, t)]));
            }
            writeln!(csv.out, "{line}")?;
        }
        let record = TruthRecord {
            seed: cfg.gen.seed,
            d,
            clusters: truth.clusters.iter().map(|(id, b)| ClusterRecord { id: *id, b: rows_of(&b.0) }).collect(),
            segments: truth.segments.clone(),
            config: cfg.gen.clone(),
        };
        serde_json::to_writer_pretty(&mut tj.out, &record)?;
        writeln!(tj.out)?;
        Ok(())
    };
    match write(&mut csv, &mut tj) {
        Ok(()) => {
            csv.commit()?;
            tj.commit()
        }
        Err(e) => {
            csv.abort();
            tj.abort();
            Err(e)
        }
    }
}

/// Rows of a `t,x1,…,xd` file. Malformed rows are kept as errors so the
/// caller can report and skip them.
/// Line number and either `(t, values)` or the reason the row was rejected.
pub type CsvRow = (usize, Result<(usize, Vec<f64>)>);

#[derive(Debug)]
pub struct CsvStream {
    pub d: usize,
    pub rows: Vec<CsvRow>,
}

impl CsvStream {
    pub fn valid(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().filter_map(|(_, r)| r.as_ref().ok().map(|(t, x)| (*t, x.as_slice())))
    }
}

pub fn read_csv(path: &Path) -> Result<CsvStream> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::InvalidInput(format!("{} is empty", path.display()))),
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "t" {
        return Err(Error::InvalidInput(format!("{}: header must be 't,x1,...,xd'", path.display())));
    }
    let d = cols.len() - 1;
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = n + 2;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let row = if fields.len() != d + 1 {
            Err(Error::InvalidInput(format!("line {lineno}: expected {} fields, found {}", d + 1, fields.len())))
        } else {
            fields[0]
                .parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("line {lineno}: bad time index '{}'", fields[0])))
                .and_then(|t| {
                    fields[1..]
                        .iter()
                        .map(|f| match f.parse::<f64>() {
                            Ok(v) if v.is_finite() => Ok(v),
                            _ => Err(Error::InvalidInput(format!("line {lineno}: bad number '{f}'"))),
                        })
                        .collect::<Result<Vec<f64>>>()
                        .map(|x| (t, x))
                })
        };
        rows.push((lineno, row));
    }
    Ok(CsvStream { d, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub ticks: usize,
    pub skipped: usize,
    pub regimes: usize,
    /// `None` for the static baseline.
    pub tau_unit: Option<f64>,
}

struct LineWriter {
    out: BufWriter<File>,
}

impl LineWriter {
    fn create(path: PathBuf) -> Result<Self> {
        let f = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(Self { out: BufWriter::new(f) })
    }

    fn write(&mut self, v: &Value) -> Result<()> {
        serde_json::to_writer(&mut self.out, v)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

fn resolve_tau(cfg: &RunConfig, x: &DMatrix<f64>) -> Result<f64> {
    match cfg.tau {
        TauSetting::Fixed(t) => Ok(t),
        TauSetting::Auto => {
            let third = x.ncols() / 3;
            if third <= cfg.engine.n_window {
                return Err(Error::InvalidInput(format!(
                    "tau_unit=auto needs a first third longer than n_window ({} samples given); set tau_unit",
                    x.ncols()
                )));
            }
            calibrate_tau_unit(&x.columns(0, third).into_owned(), &cfg.engine, cfg.tau_quantile, cfg.tau_margin)
        }
    }
}

fn eigen_pairs(engine: &Engine, regime: usize) -> Vec<Vec<[f64; 2]>> {
    engine.regimes().regimes()[regime]
        .factors()
        .iter()
        .map(|f| f.lambda.iter().map(|l| [l.re, l.im]).collect())
        .collect()
}

/// Stream a CSV through the engine, writing steps, regimes and causal snapshots.
/// With `baseline_static`, one demixing matrix is fitted to the whole stream
/// instead and only causal snapshots are produced.
pub fn cmd_run(cfg: &RunConfig, input: &Path, prefix: &Path, baseline_static: bool) -> Result<RunSummary> {
    let stream = read_csv(input)?;
    let valid: Vec<(usize, &[f64])> = stream.valid().collect();
    if valid.is_empty() {
        return Err(Error::InvalidInput(format!("{} has no usable data rows", input.display())));
    }
    let d = stream.d;
    let x = DMatrix::from_fn(d, valid.len(), |i, j| valid[j].1[i]);
    let mut skipped = 0;
    for (line, row) in &stream.rows {
        if let Err(e) = row {
            log::warn!("skipping line {line}: {e}");
            skipped += 1;
        }
    }

    let mut steps = LineWriter::create(with_suffix(prefix, ".steps.jsonl"))?;
    let mut regimes = LineWriter::create(with_suffix(prefix, ".regimes.jsonl"))?;
    let mut causal = LineWriter::create(with_suffix(prefix, ".causal.jsonl"))?;
    let n = cfg.engine.n_window;

    if baseline_static {
        let w = fixed_point_ica(&x, &cfg.engine.ica)?.w.0;
        let est = identify_causality(&w, cfg.engine.edge_threshold)?;
        regimes.write(&json!({"t": valid[0].0, "regime": 0, "w": rows_of(&w), "b": rows_of(&est.adjacency.0), "eigenvalues": []}))?;
        for k in ((n - 1)..valid.len()).step_by(cfg.causal_every) {
            causal.write(&json!({"t": valid[k].0, "regime": 0, "b": rows_of(&est.adjacency.0), "edges": edges_of(&est.digraph)}))?;
        }
        return Ok(RunSummary { ticks: valid.len(), skipped, regimes: 1, tau_unit: None });
    }

    let tau_unit = resolve_tau(cfg, &x)?;
    let mut engine = Engine::new(EngineConfig { tau_unit, ..cfg.engine.clone() }, d)?;
    let mut ticks = 0;
    for (line, row) in &stream.rows {
        let Ok((t, values)) = row else { continue };
        let out: StepOutput = match engine.process_tick(values) {
            Ok(Some(o)) => o,
            Ok(None) => {
                ticks += 1;
                continue;
            }
            Err(e) => {
                log::warn!("skipping line {line}: {e}");
                skipped += 1;
                continue;
            }
        };
        ticks += 1;
        steps.write(&json!({
            "t": t,
            "regime": out.regime_id,
            "created": out.created_new,
            "switched": out.switched,
            "fit_error": out.fit_error,
            "forecast": out.forecast,
        }))?;
        if out.created_new {
            let regime = &engine.regimes().regimes()[out.regime_id];
            let b = identify_causality(regime.demixing(), cfg.engine.edge_threshold)?.adjacency;
            regimes.write(&json!({
                "t": t,
                "regime": out.regime_id,
                "w": rows_of(regime.demixing()),
                "b": rows_of(&b.0),
                "eigenvalues": eigen_pairs(&engine, out.regime_id),
            }))?;
        }
        if (out.t - n).is_multiple_of(cfg.causal_every) {
            causal.write(&json!({"t": t, "regime": out.regime_id, "b": rows_of(&out.causal.0), "edges": edges_of(&out.digraph)}))?;
        }
    }
    Ok(RunSummary { ticks, skipped, regimes: engine.regimes().len(), tau_unit: Some(tau_unit) })
}

fn read_jsonl(path: &Path) -> Result<Vec<Value>> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::InvalidInput(format!("{} line {}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

fn field<'a>(v: &'a Value, key: &str, path: &Path) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| Error::InvalidInput(format!("{}: record without '{key}'", path.display())))
}

fn as_usize(v: &Value, path: &Path) -> Result<usize> {
    v.as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| Error::InvalidInput(format!("{}: expected a non-negative integer", path.display())))
}

fn as_f64_vec(v: &Value, path: &Path) -> Result<Vec<f64>> {
    v.as_array()
        .and_then(|a| a.iter().map(|x| x.as_f64()).collect::<Option<Vec<f64>>>())
        .ok_or_else(|| Error::InvalidInput(format!("{}: expected an array of numbers", path.display())))
}

/// Score a run against ground truth. Graph metrics average over the causal
/// snapshots; forecast errors pair the forecast made at `t` with row `t + l_s`.
pub fn cmd_eval(truth_path: &Path, run_prefix: &Path, data: &Path, l_s: usize) -> Result<MetricReport> {
    let truth: TruthRecord = serde_json::from_reader(BufReader::new(
        File::open(truth_path).map_err(|e| Error::Io(format!("{}: {e}", truth_path.display())))?,
    ))
    .map_err(|e| Error::InvalidInput(format!("{}: {e}", truth_path.display())))?;
    let mut graphs: BTreeMap<usize, CausalDigraph> = BTreeMap::new();
    for c in &truth.clusters {
        graphs.insert(c.id, CausalAdjacency(matrix_from_rows(&c.b)?).binarize(0.0));
    }
    let total = truth.segments.last().map(|s| s.end).unwrap_or(0);
    let segment_of = |t: usize| truth.segments.iter().position(|s| s.start <= t && t <= s.end);

    let stream = read_csv(data)?;
    if stream.d != truth.d {
        return Err(Error::DimensionMismatch(format!("data has {} variables, truth has {}", stream.d, truth.d)));
    }
    let actual: BTreeMap<usize, Vec<f64>> = stream.valid().map(|(t, x)| (t, x.to_vec())).collect();
    if stream.rows.len() != total {
        return Err(Error::DimensionMismatch(format!("data has {} rows, truth covers {total}", stream.rows.len())));
    }

    let nseg = truth.segments.len();
    let mut seg_graph: Vec<(f64, f64, usize)> = vec![(0.0, 0.0, 0); nseg];
    let causal_path = with_suffix(run_prefix, ".causal.jsonl");
    for rec in read_jsonl(&causal_path)? {
        let t = as_usize(field(&rec, "t", &causal_path)?, &causal_path)?;
        let s = segment_of(t)
            .ok_or_else(|| Error::DimensionMismatch(format!("causal snapshot at t={t} outside 1..={total}")))?;
        let mut est = CausalDigraph::empty(truth.d);
        for e in field(&rec, "edges", &causal_path)?.as_array().into_iter().flatten() {
            let pair = e.as_array().filter(|p| p.len() == 2).ok_or_else(|| {
                Error::InvalidInput(format!("{}: edges must be [from, to] pairs", causal_path.display()))
            })?;
            let (from, to) = (as_usize(&pair[0], &causal_path)?, as_usize(&pair[1], &causal_path)?);
            if from >= truth.d || to >= truth.d {
                return Err(Error::InvalidInput(format!("edge ({from}, {to}) outside {} variables", truth.d)));
            }
            est.set_edge(from, to, true);
        }
        let tg = &graphs[&truth.segments[s].cluster];
        seg_graph[s].0 += shd(tg, &est)? as f64;
        seg_graph[s].1 += sid(tg, &est)? as f64;
        seg_graph[s].2 += 1;
    }

    let mut seg_pred = vec![(Vec::<Vec<f64>>::new(), Vec::<Vec<f64>>::new()); nseg];
    let steps_path = with_suffix(run_prefix, ".steps.jsonl");
    let steps = if steps_path.exists() { read_jsonl(&steps_path)? } else { vec![] };
    for rec in steps {
        let t = as_usize(field(&rec, "t", &steps_path)?, &steps_path)?;
        if t == 0 || t > total {
            return Err(Error::DimensionMismatch(format!("step at t={t} outside 1..={total}")));
        }
        let forecast = as_f64_vec(field(&rec, "forecast", &steps_path)?, &steps_path)?;
        if forecast.len() != truth.d {
            return Err(Error::DimensionMismatch(format!("forecast of length {} at t={t}", forecast.len())));
        }
        if let (Some(a), Some(s)) = (actual.get(&(t + l_s)), segment_of(t + l_s)) {
            seg_pred[s].0.push(forecast);
            seg_pred[s].1.push(a.clone());
        }
    }

    let mut segments = Vec::with_capacity(nseg);
    let (mut all_shd, mut all_sid, mut all_n) = (0.0, 0.0, 0);
    let (mut all_p, mut all_a) = (Vec::new(), Vec::new());
    for (s, seg) in truth.segments.iter().enumerate() {
        let (sh, si, n) = seg_graph[s];
        let (p, a) = &seg_pred[s];
        let mean = |v: f64| if n > 0 { v / n as f64 } else { f64::NAN };
        segments.push(SegmentMetrics {
            cluster: seg.cluster,
            start: seg.start,
            end: seg.end,
            shd: mean(sh),
            sid: mean(si),
            causal_samples: n,
            rmse: if p.is_empty() { None } else { Some(rmse(p, a)?) },
            mae: if p.is_empty() { None } else { Some(mae(p, a)?) },
            forecast_samples: p.len(),
        });
        all_shd += sh;
        all_sid += si;
        all_n += n;
        all_p.extend(p.iter().cloned());
        all_a.extend(a.iter().cloned());
    }
    if all_n == 0 {
        return Err(Error::InvalidInput(format!("{} has no causal snapshots", causal_path.display())));
    }
    Ok(MetricReport {
        shd: all_shd / all_n as f64,
        sid: all_sid / all_n as f64,
        causal_samples: all_n,
        rmse: if all_p.is_empty() { None } else { Some(rmse(&all_p, &all_a)?) },
        mae: if all_p.is_empty() { None } else { Some(mae(&all_p, &all_a)?) },
        forecast_samples: all_p.len(),
        segments,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Human-readable table followed by `key=value` lines.
pub fn render_report(r: &MetricReport) -> String {
    let mut s = String::new();
    s.push_str("segment  cluster  ticks        shd     sid    rmse     mae\n");
    for (i, seg) in r.segments.iter().enumerate() {
        s.push_str(&format!(
            "{:<8} {:<8} {:>5}-{:<6} {:>6.2} {:>6.2} {:>7} {:>7}\n",
            i + 1,
            seg.cluster,
            seg.start,
            seg.end,
            seg.shd,
            seg.sid,
            opt(seg.rmse),
            opt(seg.mae)
        ));
    }
    s.push_str(&format!(
        "{:<8} {:<8} {:>12} {:>6.2} {:>6.2} {:>7} {:>7}\n\n",
        "all",
        "",
        "",
        r.shd,
        r.sid,
        opt(r.rmse),
        opt(r.mae)
    ));
    s.push_str(&format!("shd={}\nsid={}\ncausal_samples={}\n", r.shd, r.sid, r.causal_samples));
    s.push_str(&format!(
        "rmse={}\nmae={}\nforecast_samples={}\n",
        r.rmse.map(|v| v.to_string()).unwrap_or_else(|| "nan".into()),
        r.mae.map(|v| v.to_string()).unwrap_or_else(|| "nan".into()),
        r.forecast_samples
    ));
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct ThirdStats {
    pub start: usize,
    pub end: usize,
    pub p50_us: f64,
    pub p95_us: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub length: usize,
    pub regimes: usize,
    pub thirds: Vec<ThirdStats>,
    pub median_us: f64,
    /// Least-squares slope of per-tick time against tick index.
    pub slope_us_per_tick: f64,
    pub late_early_ratio: f64,
    /// `slope · length / median`.
    pub drift_fraction: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

/// Time every tick of the engine on a stationary synthetic stream.
pub fn cmd_bench(cfg: &RunConfig, length: usize) -> Result<BenchReport> {
    if length < 2000 {
        return Err(Error::InvalidInput(format!("bench length {length} < 2000")));
    }
    let gen = GenConfig { sequence: vec![1], segment_len: length, ..cfg.gen.clone() };
    let (x, _) = generate_stream(&gen)?;
    let tau_unit = resolve_tau(cfg, &x)?;
    let mut engine = Engine::new(EngineConfig { tau_unit, ..cfg.engine.clone() }, x.nrows())?;
    let mut times = Vec::with_capacity(length);
    for t in 0..length {
        let col: Vec<f64> = x.column(t).iter().copied().collect();
        let start = Instant::now();
        let out = engine.process_tick(&col)?;
        let us = start.elapsed().as_secs_f64() * 1e6;
        if out.is_some() {
            times.push((t + 1, us));
        }
    }
    let n = times.len();
    let third = n / 3;
    let spans = [(0, third), (third, 2 * third), (2 * third, n)];
    let thirds: Vec<ThirdStats> = spans
        .iter()
        .map(|&(a, b)| {
            let mut v: Vec<f64> = times[a..b].iter().map(|p| p.1).collect();
            v.sort_by(f64::total_cmp);
            ThirdStats { start: times[a].0, end: times[b - 1].0, p50_us: percentile(&v, 0.5), p95_us: percentile(&v, 0.95) }
        })
        .collect();
    let mut all: Vec<f64> = times.iter().map(|p| p.1).collect();
    all.sort_by(f64::total_cmp);
    let median = percentile(&all, 0.5);
    let mt = times.iter().map(|p| p.0 as f64).sum::<f64>() / n as f64;
    let my = times.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxy: f64 = times.iter().map(|p| (p.0 as f64 - mt) * (p.1 - my)).sum();
    let sxx: f64 = times.iter().map(|p| (p.0 as f64 - mt).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(BenchReport {
        length,
        regimes: engine.regimes().len(),
        late_early_ratio: thirds[2].p50_us / thirds[0].p50_us,
        drift_fraction: slope * length as f64 / median,
        thirds,
        median_us: median,
        slope_us_per_tick: slope,
    })
}

pub fn render_bench(r: &BenchReport) -> String {
    let mut s = String::from("third  ticks            p50(us)    p95(us)\n");
    for (i, t) in r.thirds.iter().enumerate() {
        s.push_str(&format!("{:<6} {:>6}-{:<8} {:>9.1} {:>10.1}\n", i + 1, t.start, t.end, t.p50_us, t.p95_us));
    }
    s.push_str(&format!(
        "\nlength={}\nregimes={}\nmedian_us={:.2}\nslope_us_per_tick={:.3e}\nlate_early_ratio={:.3}\ndrift_fraction={:.4}\n",
        r.length, r.regimes, r.median_us, r.slope_us_per_tick, r.late_early_ratio, r.drift_fraction
    ));
    s
}
