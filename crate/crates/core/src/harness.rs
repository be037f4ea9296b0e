//! Seeded Monte Carlo campaigns over one swept parameter.
//!
//! Every trial gets its seed from stream `trial` of a ChaCha8 generator keyed
//! by the campaign's master seed, so trial `t` uses the same seed at every
//! sweep point and for every scheme. Schemes on the same seed therefore see
//! the same channel realization and the same initial phases.
//!
//! Output files in the campaign directory:
//!
//! * `trials.csv`: one row per (sweep point, trial, scheme).
//! * `summary.csv`: mean and sample standard deviation per (sweep point, scheme).
//! * `convergence.csv`: one row per outer iteration of every trial.
//! * `manifest.json`: the campaign itself, its hash, seeds and timings.
//!
//! Timings only go to the manifest, so the CSV files are byte-identical
//! across repeated runs. While a campaign runs, finished rows are appended to
//! `trials.partial.csv`, which is removed once the final files are written.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{optimize_conventional_with_rng, random_phase_reference};
use crate::channel::build_channel_set;
use crate::config::{linear_to_db, SystemConfig};
use crate::error::{Error, Result};
use crate::sca::{alternate_with_rng, OptimizationResult, RunStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Star,
    Conventional,
    RandomPhase,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Star, Scheme::Conventional, Scheme::RandomPhase];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Star => "star",
            Scheme::Conventional => "conventional",
            Scheme::RandomPhase => "random_phase",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[default]
    None,
    PMaxDbm,
    NumElements,
    GammaMinDb,
}

impl SweepAxis {
    /// `cfg` with the swept parameter set to `value`, validated.
    pub fn apply(self, cfg: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut out = cfg.clone();
        match self {
            SweepAxis::None => {}
            SweepAxis::PMaxDbm => out.max_power_dbm = value,
            SweepAxis::GammaMinDb => out.min_primary_sinr_db = value,
            SweepAxis::NumElements => {
                if !(value >= 0.0 && value.fract() == 0.0) {
                    return Err(Error::Config(format!("element count {value} is not an integer")));
                }
                out.num_ris_elements = value as usize;
            }
        }
        out.validate()?;
        Ok(out)
    }
}

fn default_trials() -> usize {
    50
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Star, Scheme::Conventional]
}

fn default_master_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Campaign {
    #[serde(default)]
    pub base_config: SystemConfig,
    #[serde(default)]
    pub sweep_axis: SweepAxis,
    #[serde(default)]
    pub sweep_values: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials_per_point: usize,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses one per core. Does not affect results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for Campaign {
    fn default() -> Self {
        Self {
            base_config: SystemConfig::default(),
            sweep_axis: SweepAxis::None,
            sweep_values: Vec::new(),
            trials_per_point: default_trials(),
            schemes: default_schemes(),
            master_seed: default_master_seed(),
            output_dir: PathBuf::from("results"),
            workers: None,
        }
    }
}

/// Fields that determine every numeric output.
#[derive(Serialize)]
struct CampaignKey<'a> {
    base_config: &'a SystemConfig,
    sweep_axis: SweepAxis,
    sweep_values: &'a [f64],
    trials_per_point: usize,
    schemes: &'a [Scheme],
    master_seed: u64,
}

impl Campaign {
    /// Load a campaign file, or the campaign recorded in a `manifest.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tree: serde_json::Value = serde_json::from_str(&text)?;
        if let Some(inner) = tree.get_mut("campaign") {
            tree = inner.take();
        }
        let c: Campaign = serde_json::from_value(tree)?;
        c.validate()?;
        Ok(c)
    }

    /// Sweep values, or a single `None` point when nothing is swept.
    pub fn points(&self) -> Vec<Option<f64>> {
        match self.sweep_axis {
            SweepAxis::None => vec![None],
            _ => self.sweep_values.iter().map(|&v| Some(v)).collect(),
        }
    }

    pub fn config_at(&self, point: Option<f64>) -> Result<SystemConfig> {
        match point {
            Some(v) => self.sweep_axis.apply(&self.base_config, v),
            None => {
                self.base_config.validate()?;
                Ok(self.base_config.clone())
            }
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(trial as u64);
        rng.next_u64()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_point < 1 {
            return Err(Error::Config("trials_per_point must be >= 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("campaign needs at least one scheme".into()));
        }
        let mut seen = self.schemes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.schemes.len() {
            return Err(Error::Config("schemes must not repeat".into()));
        }
        if self.sweep_axis != SweepAxis::None && self.sweep_values.is_empty() {
            return Err(Error::Config("sweep_values is empty".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        for p in self.points() {
            self.config_at(p)?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of the result-determining fields.
    pub fn config_hash(&self) -> String {
        let key = CampaignKey {
            base_config: &self.base_config,
            sweep_axis: self.sweep_axis,
            sweep_values: &self.sweep_values,
            trials_per_point: self.trials_per_point,
            schemes: &self.schemes,
            master_seed: self.master_seed,
        };
        let bytes = serde_json::to_vec(&key).expect("campaign serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scheme: Scheme,
    pub seed: u64,
    pub trial: usize,
    pub swept_value: Option<f64>,
    /// bits/s/Hz; NaN when the trial errored.
    pub final_spectral_efficiency: f64,
    pub primary_sinr_db: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub feasible: bool,
    /// `converged`, `max_iterations`, `subproblem_failure` or `error: ...`.
    pub status: String,
    pub trace: Vec<f64>,
}

impl TrialRecord {
    pub fn is_error(&self) -> bool {
        self.status.starts_with("error")
    }
}

fn status_str(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Converged => "converged",
        RunStatus::MaxIterations => "max_iterations",
        RunStatus::SubproblemFailure => "subproblem_failure",
    }
}

/// Run one optimizer on the channel drawn from `cfg.rng_seed`.
pub fn run_scheme(cfg: &SystemConfig, scheme: Scheme) -> Result<OptimizationResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let channels = build_channel_set(cfg, &mut rng)?;
    match scheme {
        Scheme::Star => alternate_with_rng(&channels, cfg, &mut rng),
        Scheme::Conventional => optimize_conventional_with_rng(&channels, cfg, &mut rng),
        Scheme::RandomPhase => random_phase_reference(&channels, cfg, &mut rng),
    }
}

/// One trial. Errors are reported in the record rather than returned.
pub fn run_single(cfg: &SystemConfig, scheme: Scheme) -> TrialRecord {
    let start = Instant::now();
    let outcome = run_scheme(cfg, scheme);
    let wall_time_s = start.elapsed().as_secs_f64();
    let mut rec = TrialRecord {
        scheme,
        seed: cfg.rng_seed,
        trial: 0,
        swept_value: None,
        final_spectral_efficiency: f64::NAN,
        primary_sinr_db: f64::NAN,
        iterations: 0,
        wall_time_s,
        feasible: false,
        status: String::new(),
        trace: Vec::new(),
    };
    match outcome {
        Ok(r) => {
            rec.final_spectral_efficiency = r.final_metrics.spectral_efficiency;
            rec.primary_sinr_db = linear_to_db(r.final_metrics.primary_sinr);
            rec.iterations = r.outer_iterations;
            rec.feasible = r.feasibility.feasible;
            rec.status = status_str(r.status).to_string();
            rec.trace = r.objective_trace;
        }
        Err(e) => rec.status = format!("error: {e}"),
    }
    rec
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub swept_value: Option<f64>,
    pub scheme: Scheme,
    pub trials: usize,
    pub feasible: usize,
    pub mean_spectral_efficiency: f64,
    pub std_spectral_efficiency: f64,
    pub mean_primary_sinr_db: f64,
    pub mean_iterations: f64,
}

#[derive(Clone, Debug)]
pub struct CampaignOutcome {
    /// Ordered by sweep point, trial, then the campaign's scheme order.
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub errors: usize,
    pub output_dir: PathBuf,
}

#[derive(Serialize)]
struct TrialRow<'a> {
    scheme: &'a str,
    seed: u64,
    trial: usize,
    swept_value: Option<f64>,
    final_spectral_efficiency: f64,
    primary_sinr_db: f64,
    iterations: usize,
    feasible: bool,
    status: &'a str,
    trace: String,
}

impl<'a> From<&'a TrialRecord> for TrialRow<'a> {
    fn from(r: &'a TrialRecord) -> Self {
        TrialRow {
            scheme: r.scheme.as_str(),
            seed: r.seed,
            trial: r.trial,
            swept_value: r.swept_value,
            final_spectral_efficiency: r.final_spectral_efficiency,
            primary_sinr_db: r.primary_sinr_db,
            iterations: r.iterations,
            feasible: r.feasible,
            status: &r.status,
            trace: r.trace.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

pub fn write_trials_csv(records: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for r in records {
        w.serialize(TrialRow::from(r)).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Group by (sweep point, scheme) in first-seen order. Errored trials count
/// in `trials` but not in the means.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(Option<u64>, Scheme)> = Vec::new();
    let mut groups: BTreeMap<(Option<u64>, Scheme), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.swept_value.map(f64::to_bits), r.scheme);
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let ok: Vec<&&TrialRecord> = g.iter().filter(|r| r.final_spectral_efficiency.is_finite()).collect();
            let n = ok.len() as f64;
            let mean = |f: &dyn Fn(&TrialRecord) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / n;
            let m = mean(&|r| r.final_spectral_efficiency);
            let var = if ok.len() > 1 {
                ok.iter().map(|r| (r.final_spectral_efficiency - m).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SummaryRow {
                swept_value: key.0.map(f64::from_bits),
                scheme: key.1,
                trials: g.len(),
                feasible: g.iter().filter(|r| r.feasible).count(),
                mean_spectral_efficiency: m,
                std_spectral_efficiency: var.sqrt(),
                mean_primary_sinr_db: mean(&|r| r.primary_sinr_db),
                mean_iterations: mean(&|r| r.iterations as f64),
            }
        })
        .collect()
}

pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const CONVERGENCE_COMMENT: &str = "# scheme, seed, swept_value (empty when nothing is swept), \
iteration (1-based outer iteration), spectral_efficiency (bits/s/Hz after that iteration)";

#[derive(Serialize, Deserialize)]
struct ConvergenceRow {
    scheme: Scheme,
    seed: u64,
    swept_value: Option<f64>,
    iteration: usize,
    spectral_efficiency: f64,
}

/// One trace as read back from `convergence.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTrace {
    pub scheme: Scheme,
    pub seed: u64,
    pub swept_value: Option<f64>,
    pub trace: Vec<f64>,
}

pub fn emit_convergence_csv(records: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{CONVERGENCE_COMMENT}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        for (i, &se) in r.trace.iter().enumerate() {
            w.serialize(ConvergenceRow {
                scheme: r.scheme,
                seed: r.seed,
                swept_value: r.swept_value,
                iteration: i + 1,
                spectral_efficiency: se,
            })
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parse a file written by [`emit_convergence_csv`]; a trace starts at every
/// row with iteration 1.
pub fn read_convergence_csv(path: impl AsRef<Path>) -> Result<Vec<ConvergenceTrace>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut out: Vec<ConvergenceTrace> = Vec::new();
    for row in rdr.deserialize::<ConvergenceRow>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        match out.last_mut() {
            Some(t) if row.iteration > 1 => {
                if row.iteration != t.trace.len() + 1 {
                    return Err(Error::Config(format!(
                        "{}: iteration {} does not continue a trace",
                        path.display(),
                        row.iteration
                    )));
                }
                t.trace.push(row.spectral_efficiency);
            }
            _ => out.push(ConvergenceTrace {
                scheme: row.scheme,
                seed: row.seed,
                swept_value: row.swept_value,
                trace: vec![row.spectral_efficiency],
            }),
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct Manifest<'a> {
    campaign: &'a Campaign,
    config_hash: String,
    crate_version: &'static str,
    seeds: Vec<u64>,
    records: usize,
    errors: usize,
    wall_time_s: f64,
    /// Same order as `trials.csv`.
    trial_wall_time_s: Vec<f64>,
}

struct Job {
    order: usize,
    trial: usize,
    point: Option<f64>,
    scheme: Scheme,
    cfg: SystemConfig,
}

/// Run every (sweep point, trial, scheme) and write the output files.
pub fn run_campaign(campaign: &Campaign) -> Result<CampaignOutcome> {
    campaign.validate()?;
    let start = Instant::now();
    let dir = campaign.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let seeds: Vec<u64> = (0..campaign.trials_per_point).map(|t| campaign.trial_seed(t)).collect();
    let mut jobs = Vec::new();
    for point in campaign.points() {
        let base = campaign.config_at(point)?;
        for (trial, &seed) in seeds.iter().enumerate() {
            for &scheme in &campaign.schemes {
                let cfg = SystemConfig { rng_seed: seed, ..base.clone() };
                jobs.push(Job { order: jobs.len(), trial, point, scheme, cfg });
            }
        }
    }
    let total = jobs.len();

    let partial = dir.join("trials.partial.csv");
    let mut partial_w = csv_writer(&partial)?;
    let (tx, rx) = mpsc::channel::<(usize, TrialRecord)>();
    let collector = thread::spawn(move || -> Result<Vec<(usize, TrialRecord)>> {
        let mut got = Vec::with_capacity(total);
        for (order, rec) in rx {
            partial_w.serialize(TrialRow::from(&rec)).map_err(|e| Error::csv(&partial, e))?;
            partial_w.flush().map_err(|e| Error::io(&partial, e))?;
            got.push((order, rec));
        }
        Ok(got)
    });

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(campaign.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        jobs.into_par_iter().for_each_with(tx, |tx, job| {
            let mut rec = run_single(&job.cfg, job.scheme);
            rec.trial = job.trial;
            rec.swept_value = job.point;
            // the collector only stops once every sender is gone
            let _ = tx.send((job.order, rec));
        });
    });
    let mut got = collector.join().expect("collector thread panicked")?;
    got.sort_by_key(|(order, _)| *order);
    let records: Vec<TrialRecord> = got.into_iter().map(|(_, r)| r).collect();

    write_trials_csv(&records, dir.join("trials.csv"))?;
    let summary = summarize(&records);
    write_summary_csv(&summary, dir.join("summary.csv"))?;
    emit_convergence_csv(&records, dir.join("convergence.csv"))?;
    let errors = records.iter().filter(|r| r.is_error()).count();
    let manifest = Manifest {
        campaign,
        config_hash: campaign.config_hash(),
        crate_version: env!("CARGO_PKG_VERSION"),
        seeds,
        records: records.len(),
        errors,
        wall_time_s: start.elapsed().as_secs_f64(),
        trial_wall_time_s: records.iter().map(|r| r.wall_time_s).collect(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    let partial = dir.join("trials.partial.csv");
    fs::remove_file(&partial).map_err(|e| Error::io(&partial, e))?;

    Ok(CampaignOutcome {
        records,
        summary,
        errors,
        output_dir: dir,
    })
}
