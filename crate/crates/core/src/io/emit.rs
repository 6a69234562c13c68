//! Result tables, summary document, and checksum manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::read_text;
use crate::error::{Error, Result};
use crate::metrics::{
    daily_spreads, imv, probe_belief_error, window_cost, window_imv, window_spread, MetricSeries, Resolution,
};
use crate::simulate::{PriceSource, RunStats, SimulationLog};

/// Trailing window the summary statistics are computed over.
pub const SUMMARY_WINDOW_DAYS: usize = 10;

pub const DATA_FILES: [&str; 9] = [
    "config.toml",
    "lmp.csv",
    "belief_error.csv",
    "imv.csv",
    "daily_cost.csv",
    "profiles.csv",
    "shocks.csv",
    "metrics.csv",
    "summary.json",
];

/// 17 significant digits in scientific notation, independent of locale.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the echoed scenario.
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    /// Seconds since the Unix epoch.
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<FileEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub mode: String,
    pub seed: u64,
    pub days_completed: usize,
    pub hours_per_day: usize,
    pub window_days: usize,
    /// Per bus, over the trailing window; `None` with fewer than two prices.
    pub imv: Vec<Option<f64>>,
    pub mean_daily_spread: Vec<f64>,
    pub window_cost: f64,
    pub shock_days: Vec<usize>,
    pub stats: RunStats,
}

pub fn summarize(log: &SimulationLog) -> Summary {
    let window = SUMMARY_WINDOW_DAYS.min(log.days_completed());
    Summary {
        name: log.config.name.clone(),
        mode: log.config.mode.name().into(),
        seed: log.config.seed,
        days_completed: log.days_completed(),
        hours_per_day: log.config.hours_per_day,
        window_days: window,
        imv: (0..log.n_buses).map(|n| window_imv(log, n, window).ok()).collect(),
        mean_daily_spread: (0..log.n_buses).map(|n| window_spread(log, n, window)).collect(),
        window_cost: window_cost(log, window),
        shock_days: log.shock_days(),
        stats: log.stats.clone(),
    }
}

struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(csv_err)?;
        Ok(Table { w })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(csv_err)
    }

    fn finish(self) -> Result<Vec<u8>> {
        self.w
            .into_inner()
            .map_err(|e| Error::Input(format!("cannot finish table: {e}")))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Input(format!("cannot write table: {e}"))
}

fn source_name(s: PriceSource) -> &'static str {
    match s {
        PriceSource::Cleared => "cleared",
        PriceSource::CarriedForward => "carried-forward",
        PriceSource::Missing => "missing",
    }
}

fn lmp_table(log: &SimulationLog) -> Result<Vec<u8>> {
    let mut header = vec!["day".to_string(), "hour".into(), "source".into()];
    header.extend((1..=log.n_buses).map(|n| format!("bus{n}")));
    let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>())?;
    for r in &log.market {
        let mut row = vec![r.day.to_string(), r.hour.to_string(), source_name(r.price_source).into()];
        row.extend(r.lmp.iter().map(|&p| num(p)));
        t.row(&row)?;
    }
    t.finish()
}

fn belief_table(log: &SimulationLog) -> Result<Vec<u8>> {
    let h = log.config.hours_per_day;
    let mut t = Table::new(&[
        "bus", "type", "agent", "day", "hour", "belief", "price", "relative_error", "flagged",
    ])?;
    for p in &log.probes {
        let per_hour = (0..h)
            .map(|hour| probe_belief_error(p, h, hour))
            .collect::<Result<Vec<_>>>()?;
        let ty = &log.types[p.type_index].name;
        for (i, ph) in p.hours.iter().enumerate().take(per_hour.first().map_or(0, |e| e.len()) * h) {
            let e = per_hour[i % h][i / h];
            t.row([
                (p.node + 1).to_string(),
                ty.clone(),
                p.agent.to_string(),
                (i / h).to_string(),
                (i % h).to_string(),
                num(ph.belief),
                num(ph.price),
                if e.flagged { String::new() } else { num(e.value) },
                e.flagged.to_string(),
            ])?;
        }
    }
    t.finish()
}

fn imv_table(log: &SimulationLog, summary: &Summary) -> Result<Vec<u8>> {
    let mut t = Table::new(&["bus", "window_days", "imv_window", "imv_full"])?;
    let h = log.config.hours_per_day;
    let full_len = log.days_completed() * h;
    for n in 0..log.n_buses {
        let full = imv(&log.lmp_series(n)[..full_len]).ok();
        t.row([
            (n + 1).to_string(),
            summary.window_days.to_string(),
            summary.imv[n].map(num).unwrap_or_default(),
            full.map(num).unwrap_or_default(),
        ])?;
    }
    t.finish()
}

fn cost_table(log: &SimulationLog) -> Result<Vec<u8>> {
    let mut header = vec!["day".to_string(), "total".into()];
    header.extend(log.types.iter().map(|t| t.name.clone()));
    let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>())?;
    for day in 0..log.days_completed() {
        let mut per_type = vec![0.0; log.types.len()];
        for (agent, costs) in log.daily_costs.iter().enumerate() {
            per_type[log.agent_types[agent]] += costs[day];
        }
        let mut row = vec![day.to_string(), num(per_type.iter().sum())];
        row.extend(per_type.into_iter().map(num));
        t.row(&row)?;
    }
    t.finish()
}

fn profile_table(log: &SimulationLog) -> Result<Vec<u8>> {
    let mut t = Table::new(&["day", "type", "hour", "soc_bin", "action_bin", "count"])?;
    for (day, p) in log.profiles.iter().enumerate() {
        for ty in 0..p.n_types {
            for hour in 0..p.hours {
                for (cell, &c) in p.cell_counts(ty, hour).iter().enumerate() {
                    if c > 0 {
                        t.row([
                            day.to_string(),
                            log.types[ty].name.clone(),
                            hour.to_string(),
                            (cell / p.action_bins).to_string(),
                            (cell % p.action_bins).to_string(),
                            c.to_string(),
                        ])?;
                    }
                }
            }
        }
    }
    t.finish()
}

fn shock_table(log: &SimulationLog) -> Result<Vec<u8>> {
    let mut t = Table::new(&["kind", "day", "start_hour", "end_hour", "magnitude"])?;
    for e in &log.shocks {
        t.row([
            e.kind.name().to_string(),
            e.day.to_string(),
            e.start_hour.to_string(),
            e.end_hour.to_string(),
            num(e.magnitude),
        ])?;
    }
    t.finish()
}

fn metric_table(series: &[MetricSeries]) -> Result<Vec<u8>> {
    let mut t = Table::new(&["name", "unit", "resolution", "seed", "index", "value"])?;
    for s in series {
        let res = match s.resolution {
            Resolution::Day => "day",
            Resolution::Hour => "hour",
        };
        for (i, v) in s.values.iter().enumerate() {
            t.row([s.name.clone(), s.unit.clone(), res.into(), s.seed.to_string(), i.to_string(), num(*v)])?;
        }
    }
    t.finish()
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Input(format!("cannot serialize: {e}")))?;
    v.push(b'\n');
    Ok(v)
}

/// Writes every table, the summary, the scenario echo and the manifest into
/// `outdir`. Data files depend only on the log, so equal runs give equal bytes.
pub fn emit_results(
    log: &SimulationLog,
    metrics: &[MetricSeries],
    echo: &str,
    outdir: &Path,
    started_unix: u64,
) -> Result<RunManifest> {
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let summary = summarize(log);
    let contents: Vec<(&str, Vec<u8>)> = vec![
        ("config.toml", echo.as_bytes().to_vec()),
        ("lmp.csv", lmp_table(log)?),
        ("belief_error.csv", belief_table(log)?),
        ("imv.csv", imv_table(log, &summary)?),
        ("daily_cost.csv", cost_table(log)?),
        ("profiles.csv", profile_table(log)?),
        ("shocks.csv", shock_table(log)?),
        ("metrics.csv", metric_table(metrics)?),
        ("summary.json", json(&summary)?),
    ];
    let mut files = Vec::with_capacity(contents.len());
    for (name, bytes) in &contents {
        let path = outdir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        files.push(FileEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
    }
    let manifest = RunManifest {
        config_hash: sha256_hex(echo.as_bytes()),
        seed: log.config.seed,
        code_version: env!("CARGO_PKG_VERSION").into(),
        started_unix,
        finished_unix: unix_now(),
        files,
    };
    let path = outdir.join("manifest.json");
    fs::write(&path, json(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn read_manifest(outdir: &Path) -> Result<RunManifest> {
    let path = outdir.join("manifest.json");
    serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Names of inventoried files whose size or checksum no longer matches.
pub fn verify_manifest(outdir: &Path) -> Result<Vec<String>> {
    let manifest = read_manifest(outdir)?;
    let mut bad = Vec::new();
    for f in &manifest.files {
        let path = outdir.join(&f.path);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() as u64 != f.bytes || sha256_hex(&bytes) != f.sha256 {
            bad.push(f.path.clone());
        }
    }
    Ok(bad)
}

/// Metrics recomputed from the tables of a finished run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredMetrics {
    pub bus: usize,
    pub window_days: usize,
    pub imv: Option<f64>,
    pub mean_daily_spread: f64,
    pub window_cost: f64,
}

fn parse_num(tok: &str, path: &Path, line: usize) -> Result<f64> {
    tok.parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line,
        message: format!("cannot parse number from {tok:?}"),
    })
}

fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let text = read_text(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_err)?.clone();
    let c = headers.iter().position(|h| h == column).ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        line: 1,
        message: format!("missing column {column:?}"),
    })?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push(parse_num(rec.get(c).unwrap_or(""), path, line)?);
    }
    Ok(out)
}

/// Recomputes the trailing-window IMV, spread and cost at a 1-based bus.
pub fn recompute_metrics(outdir: &Path, bus: usize, window_days: usize) -> Result<StoredMetrics> {
    let summary: Summary = {
        let path = outdir.join("summary.json");
        serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?
    };
    let h = summary.hours_per_day;
    let prices = read_column(&outdir.join("lmp.csv"), &format!("bus{bus}"))?;
    let costs = read_column(&outdir.join("daily_cost.csv"), "total")?;
    let days = prices.len() / h;
    let window = window_days.min(days);
    let tail = &prices[(days - window) * h..days * h];
    let spreads = daily_spreads(tail, h);
    Ok(StoredMetrics {
        bus,
        window_days: window,
        imv: imv(tail).ok(),
        mean_daily_spread: if spreads.is_empty() {
            0.0
        } else {
            spreads.iter().sum::<f64>() / spreads.len() as f64
        },
        window_cost: costs[costs.len().saturating_sub(window)..].iter().sum(),
    })
}

/// Data files of a run directory, for byte comparisons between runs.
pub fn data_paths(outdir: &Path) -> Vec<PathBuf> {
    DATA_FILES.iter().map(|f| outdir.join(f)).collect()
}
