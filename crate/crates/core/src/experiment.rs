//! End-to-end experiments: stream generation, classification, revision,
//! scoring and the tabular reports built from them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::{run_stream, ConcentrationMode, CrpMode, HsdfConfig, SamplingMode};
use crate::error::{HsdfError, Result};
use crate::revision::{class_transition_counts, revise, EtaRule};
use crate::scoring::{score_epochs, EpochScore};
use crate::simulators::{make_stream, LabeledStream, RegimeSpec, Snr, StreamConfig, StreamProvenance};
use crate::symbolic::{CountMatrix, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "duffing2")]
    Duffing2,
    #[serde(rename = "duffing_vdp3")]
    DuffingVdp3,
    #[serde(rename = "external-csv")]
    ExternalCsv,
}

impl Scenario {
    /// Simulated regimes in label order; empty for external data.
    pub fn regimes(&self) -> Vec<RegimeSpec<f64>> {
        match self {
            Self::Duffing2 => vec![RegimeSpec::duffing_pre(), RegimeSpec::duffing_post()],
            Self::DuffingVdp3 => vec![
                RegimeSpec::duffing_pre(),
                RegimeSpec::duffing_post(),
                RegimeSpec::vanderpol(),
            ],
            Self::ExternalCsv => Vec::new(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Duffing2 => "duffing2",
            Self::DuffingVdp3 => "duffing_vdp3",
            Self::ExternalCsv => "external-csv",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = HsdfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "duffing2" => Ok(Self::Duffing2),
            "duffing_vdp3" | "duffing-vdp3" => Ok(Self::DuffingVdp3),
            "external-csv" | "external" | "csv" => Ok(Self::ExternalCsv),
            other => Err(HsdfError::InvalidConfig(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub stream: StreamConfig,
    pub hsdf: HsdfConfig<f64>,
    pub revise: bool,
    pub eta: EtaRule<f64>,
    pub max_word_len: usize,
    /// Leading epochs whose samples fix the partition.
    pub calibration_epochs: usize,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut cfg = Self {
            scenario: Scenario::Duffing2,
            stream: StreamConfig::default(),
            hsdf: HsdfConfig::default(),
            revise: false,
            eta: EtaRule::HalfInverseClassCount,
            max_word_len: 1,
            calibration_epochs: 1,
            seed: 1,
            input: None,
            output: None,
        };
        cfg.set_seed(1);
        cfg
    }
}

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| HsdfError::InvalidConfig(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(HsdfError::InvalidConfig(format!("bad value `{value}` for `{key}`"))),
    }
}

impl ExperimentConfig {
    /// Derives the switching, noise and sampling seeds from one run seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.hsdf.rng_seed = seed;
        self.stream.switch_seed = seed;
        self.stream.noise_seed = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "scenario" => self.scenario = parse(&key, v)?,
            "snr" => self.stream.snr = v.parse()?,
            "epochs" => self.stream.epochs = parse(&key, v)?,
            "epoch_length" => self.stream.epoch_length = parse(&key, v)?,
            "segment_min" => self.stream.segment_epochs.0 = parse(&key, v)?,
            "segment_max" => self.stream.segment_epochs.1 = parse(&key, v)?,
            "first_regime" => {
                self.stream.first_regime = if v == "random" { None } else { Some(parse(&key, v)?) }
            }
            "burn_in" => self.stream.burn_in = parse(&key, v)?,
            "seed" => self.set_seed(parse(&key, v)?),
            "switch_seed" => self.stream.switch_seed = parse(&key, v)?,
            "noise_seed" => self.stream.noise_seed = parse(&key, v)?,
            "rng_seed" => self.hsdf.rng_seed = parse(&key, v)?,
            "epsilon" => self.hsdf.epsilon = parse(&key, v)?,
            "kappa" => self.hsdf.kappa = parse(&key, v)?,
            "delta" => self.hsdf.delta = parse(&key, v)?,
            "nu" => self.hsdf.nu = parse(&key, v)?,
            "depth" => self.hsdf.depth = parse(&key, v)?,
            "alphabet" | "alphabet_size" => self.hsdf.alphabet_size = parse(&key, v)?,
            "crp" | "crp_mode" => self.hsdf.crp_mode = v.parse()?,
            "concentration" | "concentration_mode" => self.hsdf.concentration_mode = v.parse::<ConcentrationMode>()?,
            "fit_window" => self.hsdf.fit_window = parse(&key, v)?,
            "fit_floor" => self.hsdf.fit_floor = parse(&key, v)?,
            "fit_offset" => self.hsdf.fit_offset = parse(&key, v)?,
            "sampling" => {
                self.hsdf.sampling = match v {
                    "sample" => SamplingMode::Sample,
                    "argmax" => SamplingMode::Argmax,
                    _ => return Err(HsdfError::InvalidConfig(format!("bad value `{v}` for `sampling`"))),
                }
            }
            "revise" => self.revise = parse_bool(&key, v)?,
            "eta" => {
                self.eta = if v == "auto" {
                    EtaRule::HalfInverseClassCount
                } else {
                    EtaRule::Fixed(parse(&key, v)?)
                }
            }
            "max_word_len" => self.max_word_len = parse(&key, v)?,
            "calibration_epochs" => self.calibration_epochs = parse(&key, v)?,
            "in" | "input" => self.input = Some(PathBuf::from(v)),
            "out" | "output" => self.output = Some(PathBuf::from(v)),
            other => return Err(HsdfError::InvalidConfig(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file; `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv_str(text)?;
        Ok(cfg)
    }

    pub fn apply_kv_str(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| HsdfError::MalformedInput {
                row: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k, v).map_err(|e| HsdfError::MalformedInput { row: i + 1, msg: e.to_string() })?;
        }
        Ok(())
    }

    pub fn to_kv_string(&self) -> String {
        let h = &self.hsdf;
        let s = &self.stream;
        let eta = match self.eta {
            EtaRule::HalfInverseClassCount => "auto".to_string(),
            EtaRule::Fixed(v) => v.to_string(),
        };
        let mut out = format!(
            "scenario = {}\nsnr = {}\nepochs = {}\nepoch_length = {}\nsegment_min = {}\nsegment_max = {}\n\
             first_regime = {}\nburn_in = {}\nseed = {}\nswitch_seed = {}\nnoise_seed = {}\nrng_seed = {}\n\
             epsilon = {}\nkappa = {}\ndelta = {}\nnu = {}\ndepth = {}\nalphabet = {}\ncrp = {}\n\
             concentration = {}\nfit_window = {}\nfit_floor = {}\nfit_offset = {}\nsampling = {}\n\
             revise = {}\neta = {}\nmax_word_len = {}\ncalibration_epochs = {}\n",
            self.scenario,
            s.snr,
            s.epochs,
            s.epoch_length,
            s.segment_epochs.0,
            s.segment_epochs.1,
            s.first_regime.map_or("random".to_string(), |r| r.to_string()),
            s.burn_in,
            self.seed,
            s.switch_seed,
            s.noise_seed,
            h.rng_seed,
            h.epsilon,
            h.kappa,
            h.delta,
            h.nu,
            h.depth,
            h.alphabet_size,
            kebab(&h.crp_mode),
            kebab(&h.concentration_mode),
            h.fit_window,
            h.fit_floor,
            h.fit_offset,
            kebab(&h.sampling),
            self.revise,
            eta,
            self.max_word_len,
            self.calibration_epochs,
        );
        if let Some(p) = &self.input {
            out.push_str(&format!("in = {}\n", p.display()));
        }
        if let Some(p) = &self.output {
            out.push_str(&format!("out = {}\n", p.display()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.hsdf.validate()?;
        if self.scenario == Scenario::ExternalCsv {
            match &self.input {
                None => return Err(HsdfError::InvalidConfig("external-csv needs an input path".into())),
                Some(p) if !p.exists() => {
                    return Err(HsdfError::InvalidConfig(format!("input `{}` does not exist", p.display())))
                }
                _ => {}
            }
        }
        if self.calibration_epochs == 0 || self.max_word_len == 0 {
            return Err(HsdfError::InvalidConfig("calibration_epochs and max_word_len must be positive".into()));
        }
        Ok(())
    }
}

fn kebab<S: Serialize>(v: &S) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Simulates the configured scenario.
pub fn generate(config: &ExperimentConfig) -> Result<LabeledStream<f64>> {
    let regimes = config.scenario.regimes();
    if regimes.is_empty() {
        return Err(HsdfError::InvalidConfig("external-csv streams are read, not generated".into()));
    }
    make_stream(&regimes, &config.stream)
}

pub fn provenance(config: &ExperimentConfig, stream: &LabeledStream<f64>) -> StreamProvenance {
    StreamProvenance {
        scenario: config.scenario.to_string(),
        regimes: config.scenario.regimes(),
        config: config.stream.clone(),
        dt: stream.dt,
    }
}

/// Obtains the stream a run operates on: the input file when given (with the
/// SNR taken from its sidecar, if present), otherwise a fresh simulation. The flag reports whether ground truth is
/// available.
pub fn load_stream(config: &ExperimentConfig) -> Result<(LabeledStream<f64>, bool)> {
    match &config.input {
        Some(path) => {
            let file = std::fs::File::open(path)?;
            let (mut stream, has_labels) =
                crate::simulators::read_stream_csv(std::io::BufReader::new(file), config.stream.epoch_length)?;
            let sidecar = crate::simulators::sidecar_path(path);
            if sidecar.exists() {
                let text = std::fs::read_to_string(sidecar)?;
                let prov: StreamProvenance = serde_json::from_str(&text)?;
                stream.snr = prov.config.snr;
                stream.dt = prov.dt;
            }
            Ok((stream, has_labels))
        }
        None => Ok((generate(config)?, true)),
    }
}

/// One epoch of a run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub truth: Option<usize>,
    pub log_likelihoods: Vec<f64>,
    pub log_scores: Vec<f64>,
    pub rate: Option<Vec<f64>>,
    pub gamma: f64,
    pub b: u8,
    pub posterior: Vec<f64>,
    pub last_class: usize,
    pub chosen: usize,
    pub new_class: bool,
    pub revised: Option<usize>,
}

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scenario: Scenario,
    pub snr: Snr,
    pub crp: CrpMode,
    pub revised: bool,
    pub seed: u64,
    pub epochs: usize,
    /// Error of the online assignment, when ground truth exists.
    pub online_error_pct: Option<f64>,
    /// Error after revision, when revision ran and ground truth exists.
    pub revised_error_pct: Option<f64>,
    pub classes_online: usize,
    pub classes_revised: Option<usize>,
    pub eta: Option<f64>,
    pub pairwise_distance: Option<Vec<Vec<f64>>>,
    /// Confusion of the final labels (after revision when it ran).
    pub score: Option<EpochScore>,
    pub partition_edges: Vec<f64>,
    pub wall_time_s: f64,
    pub labels_online: Vec<usize>,
    pub labels_final: Vec<usize>,
    /// Upper-tier chain: transitions between consecutive final labels.
    pub class_transitions: Vec<Vec<u64>>,
    pub trace: Vec<EpochTrace>,
}

impl ScoreReport {
    /// Error of the final labels.
    pub fn error_pct(&self) -> Option<f64> {
        self.revised_error_pct.or(self.online_error_pct)
    }

    pub fn classes(&self) -> usize {
        self.classes_revised.unwrap_or(self.classes_online)
    }
}

pub fn epoch_counts(
    stream: &LabeledStream<f64>,
    partition: &Partition<f64>,
    depth: usize,
) -> Result<Vec<CountMatrix>> {
    stream
        .epoch_chunks()
        .enumerate()
        .map(|(j, chunk)| partition.symbolize(chunk, j)?.count_transitions(depth))
        .collect()
}

/// Symbolizes, classifies, optionally revises and scores a stream.
pub fn run_on_stream(
    config: &ExperimentConfig,
    stream: &LabeledStream<f64>,
    has_labels: bool,
) -> Result<ScoreReport> {
    config.hsdf.validate()?;
    let start = Instant::now();
    let cal_len = (config.calibration_epochs * stream.epoch_length).min(stream.samples.len());
    let partition = Partition::uniform(&stream.samples[..cal_len], config.hsdf.alphabet_size)?;
    let counts = epoch_counts(stream, &partition, config.hsdf.depth)?;
    let outcome = run_stream(&counts, &config.hsdf)?;
    let labels_online = outcome.labels();
    let classes_online = outcome.registry.class_count();

    let revision = if config.revise {
        let eta = config.eta.resolve(classes_online);
        Some(revise(&outcome.registry, &outcome.records, eta, config.max_word_len)?)
    } else {
        None
    };
    let labels_final = revision.as_ref().map_or_else(|| labels_online.clone(), |r| r.relabel(&labels_online));
    let wall_time_s = start.elapsed().as_secs_f64();

    let truth = has_labels.then_some(&stream.labels);
    let online_error_pct = truth
        .map(|t| score_epochs(t, &labels_online).map(|s| s.epoch_error_pct))
        .transpose()?;
    let score = truth.map(|t| score_epochs(t, &labels_final)).transpose()?;
    let revised_error_pct = if revision.is_some() {
        score.as_ref().map(|s| s.epoch_error_pct)
    } else {
        None
    };

    let trace = outcome
        .records
        .iter()
        .map(|r| EpochTrace {
            epoch: r.epoch_id,
            truth: truth.map(|t| t[r.epoch_id]),
            log_likelihoods: r.log_likelihoods.clone(),
            log_scores: r.log_scores.clone(),
            rate: r.rate.clone(),
            gamma: r.gamma,
            b: r.b_used,
            posterior: r.posterior.clone(),
            last_class: r.last_class,
            chosen: r.chosen,
            new_class: r.new_class_created,
            revised: revision.as_ref().map(|rv| rv.mapping[r.chosen]),
        })
        .collect();

    let final_classes = labels_final.iter().max().map_or(0, |m| m + 1);
    let class_transitions = class_transition_counts(&labels_final, final_classes);

    Ok(ScoreReport {
        scenario: config.scenario,
        snr: stream.snr,
        crp: config.hsdf.crp_mode,
        revised: config.revise,
        seed: config.seed,
        epochs: stream.epochs(),
        online_error_pct,
        revised_error_pct,
        classes_online,
        classes_revised: revision.as_ref().map(|r| r.registry.class_count()),
        eta: revision.as_ref().map(|r| r.report.eta),
        pairwise_distance: revision.map(|r| r.report.pairwise),
        score,
        partition_edges: partition.edges().to_vec(),
        wall_time_s,
        labels_online,
        labels_final,
        class_transitions,
        trace,
    })
}

/// Loads or simulates the stream, then runs it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ScoreReport> {
    config.validate()?;
    let start = Instant::now();
    let (stream, has_labels) = load_stream(config)?;
    let mut report = run_on_stream(config, &stream, has_labels)?;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Runs every configuration in parallel; results keep the input order.
pub fn run_grid(configs: &[ExperimentConfig]) -> Vec<Result<ScoreReport>> {
    use rayon::prelude::*;
    configs.par_iter().map(run_experiment).collect()
}

/// The classical, classical-with-revision and adaptive variants of a base
/// configuration, at each requested SNR.
pub fn table_grid(base: &ExperimentConfig, snrs: &[Snr], seeds: &[u64]) -> Vec<ExperimentConfig> {
    let variants = [(CrpMode::Classical, false), (CrpMode::Classical, true), (CrpMode::Adaptive, false)];
    let mut out = Vec::new();
    for &(crp, revise) in &variants {
        for &snr in snrs {
            for &seed in seeds {
                let mut c = base.clone();
                c.hsdf.crp_mode = crp;
                c.revise = revise;
                c.stream.snr = snr;
                c.set_seed(seed);
                out.push(c);
            }
        }
    }
    out
}

/// One row of the aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub scenario: String,
    pub algorithm: String,
    pub snr: String,
    pub runs: usize,
    pub error_pct_mean: f64,
    pub error_pct_std: f64,
    pub classes_mean: f64,
    pub time_s_mean: f64,
}

pub fn algorithm_label(crp: CrpMode, revised: bool) -> String {
    match (crp, revised) {
        (CrpMode::Classical, false) => "classical".into(),
        (CrpMode::Classical, true) => "classical+revision".into(),
        (CrpMode::Adaptive, false) => "adaptive".into(),
        (CrpMode::Adaptive, true) => "adaptive+revision".into(),
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Groups reports by (scenario, algorithm, SNR) in first-seen order.
pub fn aggregate(reports: &[ScoreReport]) -> Result<Vec<TableRow>> {
    if reports.is_empty() {
        return Err(HsdfError::IncompatibleTraces("no reports to aggregate".into()));
    }
    let epochs = reports[0].epochs;
    if let Some(r) = reports.iter().find(|r| r.epochs != epochs) {
        return Err(HsdfError::IncompatibleTraces(format!(
            "reports cover {} and {} epochs",
            epochs, r.epochs
        )));
    }
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for r in reports {
        let key = (r.scenario.to_string(), algorithm_label(r.crp, r.revised), r.snr.to_string());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scenario, algorithm, snr)| {
            let group: Vec<&ScoreReport> = reports
                .iter()
                .filter(|r| {
                    r.scenario.to_string() == scenario
                        && algorithm_label(r.crp, r.revised) == algorithm
                        && r.snr.to_string() == snr
                })
                .collect();
            let errors: Vec<f64> = group.iter().filter_map(|r| r.error_pct()).collect();
            if errors.len() != group.len() {
                return Err(HsdfError::IncompatibleTraces(format!(
                    "{scenario}/{algorithm}/{snr} mixes labeled and unlabeled runs"
                )));
            }
            let (error_pct_mean, error_pct_std) = mean_std(&errors);
            let classes: Vec<f64> = group.iter().map(|r| r.classes() as f64).collect();
            let times: Vec<f64> = group.iter().map(|r| r.wall_time_s).collect();
            Ok(TableRow {
                scenario,
                algorithm,
                snr,
                runs: group.len(),
                error_pct_mean,
                error_pct_std,
                classes_mean: mean_std(&classes).0,
                time_s_mean: mean_std(&times).0,
            })
        })
        .collect()
}

pub fn write_table_csv<W: std::io::Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-epoch log-likelihood of the chosen class with new-class markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodPoint {
    pub seed: u64,
    pub epoch: usize,
    pub chosen: usize,
    pub log_likelihood: f64,
    pub new_class: bool,
}

/// One point per classified epoch (`epochs − 1` per report). A newly created
/// class carries the likelihood of the class that was last before it.
pub fn likelihood_series(report: &ScoreReport) -> Vec<LikelihoodPoint> {
    report
        .trace
        .iter()
        .map(|t| {
            let class = if t.new_class { t.last_class } else { t.chosen };
            LikelihoodPoint {
                seed: report.seed,
                epoch: t.epoch,
                chosen: t.chosen,
                log_likelihood: t.log_likelihoods[class],
                new_class: t.new_class,
            }
        })
        .collect()
}

pub fn write_series_csv<W: std::io::Write>(reports: &[ScoreReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        for p in likelihood_series(r) {
            w.serialize(p)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_json(report: &ScoreReport, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(file), report)?;
    Ok(())
}

/// Writes the trace as JSON lines, one record per epoch.
pub fn write_trace_jsonl<W: std::io::Write>(report: &ScoreReport, mut out: W) -> Result<()> {
    for t in &report.trace {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_report_json(path: &Path) -> Result<ScoreReport> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
