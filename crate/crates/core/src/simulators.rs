//! Ground-truth-labeled non-stationary streams from forced nonlinear oscillators.
//!
//! Two systems are provided:
//!
//! * the forced Duffing oscillator `x'' + β x' + α₁ x + λ x³ = A cos(w t)`,
//!   whose response changes character across `β ≈ 0.3`;
//! * a strongly damped Van der Pol-type system `x'' + c x² x' + x = c` with
//!   `c = 1000`, which is stiff and is integrated with small internal steps.
//!
//! Integration is fixed-step fourth-order Runge-Kutta. Each regime keeps its
//! own continuation state, so a regime resumes where it last left off when the
//! stream switches back to it.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HsdfError, Result};
use crate::scalar::Real;

/// Dynamical system generating one regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum Oscillator<T> {
    Duffing {
        beta: T,
        alpha1: T,
        lambda: T,
        amplitude: T,
        omega: T,
    },
    VanDerPol {
        coefficient: T,
    },
}

impl<T: Real> Oscillator<T> {
    /// Duffing with forcing `A = 22`, `w = 5 rad/s`, `α₁ = λ = 1`.
    pub fn duffing(beta: T) -> Self {
        Self::Duffing {
            beta,
            alpha1: T::one(),
            lambda: T::one(),
            amplitude: T::lit(22.0),
            omega: T::lit(5.0),
        }
    }

    pub fn van_der_pol() -> Self {
        Self::VanDerPol {
            coefficient: T::lit(1000.0),
        }
    }

    /// Acceleration `x''` at `(x, v, t)`.
    #[inline]
    pub fn acceleration(&self, x: T, v: T, t: T) -> T {
        match *self {
            Self::Duffing {
                beta,
                alpha1,
                lambda,
                amplitude,
                omega,
            } => amplitude * (omega * t).cos() - beta * v - alpha1 * x - lambda * x * x * x,
            Self::VanDerPol { coefficient } => coefficient - coefficient * x * x * v - x,
        }
    }

    /// Magnitude bound on the Jacobian eigenvalues, used to subdivide steps
    /// that would leave the RK4 stability region.
    #[inline]
    fn stiffness(&self, x: T, v: T) -> T {
        match *self {
            Self::Duffing { .. } => T::zero(),
            Self::VanDerPol { coefficient } => {
                coefficient * x * x + (T::lit(2.0) * coefficient * x * v).abs().sqrt() + T::one()
            }
        }
    }
}

/// Position, velocity and time of an oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OscillatorState<T> {
    pub x: T,
    pub v: T,
    pub t: T,
}

impl<T: Real> OscillatorState<T> {
    pub fn new(x: T, v: T) -> Self {
        Self { x, v, t: T::zero() }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite() && self.t.is_finite()
    }
}

/// One classical RK4 step of size `h`.
#[inline]
pub fn rk4_step<T: Real>(sys: &Oscillator<T>, s: OscillatorState<T>, h: T) -> OscillatorState<T> {
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let f = |x: T, v: T, t: T| (v, sys.acceleration(x, v, t));
    let (k1x, k1v) = f(s.x, s.v, s.t);
    let (k2x, k2v) = f(s.x + half * h * k1x, s.v + half * h * k1v, s.t + half * h);
    let (k3x, k3v) = f(s.x + half * h * k2x, s.v + half * h * k2v, s.t + half * h);
    let (k4x, k4v) = f(s.x + h * k3x, s.v + h * k3v, s.t + h);
    OscillatorState {
        x: s.x + h / six * (k1x + two * k2x + two * k3x + k4x),
        v: s.v + h / six * (k1v + two * k2v + two * k3v + k4v),
        t: s.t + h,
    }
}

/// A labeled regime: its oscillator, the sampling interval and the number of
/// RK4 steps taken per recorded sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec<T> {
    pub name: String,
    pub oscillator: Oscillator<T>,
    /// Time between recorded samples.
    pub dt: T,
    /// RK4 steps per recorded sample.
    pub substeps: usize,
}

impl<T: Real> RegimeSpec<T> {
    pub fn duffing_pre() -> Self {
        Self {
            name: "duffing_beta_0.1".into(),
            oscillator: Oscillator::duffing(T::lit(0.1)),
            dt: T::lit(0.01),
            substeps: 1,
        }
    }

    pub fn duffing_post() -> Self {
        Self {
            name: "duffing_beta_0.4".into(),
            oscillator: Oscillator::duffing(T::lit(0.4)),
            dt: T::lit(0.01),
            substeps: 1,
        }
    }

    /// Stiff regime: internal step 1e-4 s, one recorded sample every 100 steps.
    pub fn vanderpol() -> Self {
        Self {
            name: "vanderpol".into(),
            oscillator: Oscillator::van_der_pol(),
            dt: T::lit(0.01),
            substeps: 100,
        }
    }
}

// RK4's real-axis stability limit is about 2.78; stay inside it.
const STABLE_STEP: f64 = 2.5;

/// Integrates `n_samples` recorded samples from `state`, returning the recorded
/// positions and the continuation state.
pub fn integrate_regime<T: Real>(
    spec: &RegimeSpec<T>,
    state: OscillatorState<T>,
    n_samples: usize,
) -> Result<(Vec<T>, OscillatorState<T>)> {
    if !(spec.dt > T::zero()) || spec.substeps == 0 {
        return Err(HsdfError::InvalidConfig("dt must be positive and substeps ≥ 1".into()));
    }
    if !state.is_finite() {
        return Err(HsdfError::NonFiniteState { step: 0 });
    }
    let h = spec.dt / T::from_usize(spec.substeps).unwrap();
    let limit = T::lit(STABLE_STEP);
    let mut s = state;
    let mut out = Vec::with_capacity(n_samples);
    let mut step = 0usize;
    for _ in 0..n_samples {
        for _ in 0..spec.substeps {
            let stiff = spec.oscillator.stiffness(s.x, s.v) * h;
            if stiff > limit {
                let pieces = (stiff / limit).ceil().to_usize().unwrap_or(usize::MAX).min(1 << 20);
                let hh = h / T::from_usize(pieces).unwrap();
                for _ in 0..pieces {
                    s = rk4_step(&spec.oscillator, s, hh);
                }
            } else {
                s = rk4_step(&spec.oscillator, s, h);
            }
            step += 1;
            if !s.is_finite() {
                return Err(HsdfError::NonFiniteState { step });
            }
        }
        out.push(s.x);
    }
    Ok((out, s))
}

/// Signal-to-noise ratio as a linear variance ratio; `None` means noiseless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr(pub Option<f64>);

impl Snr {
    pub const INFINITE: Snr = Snr(None);

    pub fn finite(v: f64) -> Result<Self> {
        if v.is_finite() && v > 0.0 {
            Ok(Self(Some(v)))
        } else if v == f64::INFINITY {
            Ok(Self::INFINITE)
        } else {
            Err(HsdfError::InvalidConfig(format!("SNR must be positive, got {v}")))
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.0.is_none()
    }
}

impl std::str::FromStr for Snr {
    type Err = HsdfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Self::INFINITE),
            other => other
                .parse::<f64>()
                .map_err(|_| HsdfError::InvalidConfig(format!("bad SNR `{s}`")))
                .and_then(Self::finite),
        }
    }
}

impl std::fmt::Display for Snr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            None => write!(f, "inf"),
            Some(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Stream generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub epochs: usize,
    pub epoch_length: usize,
    pub snr: Snr,
    pub switch_seed: u64,
    pub noise_seed: u64,
    /// Inclusive bounds on the length of a constant-regime segment, in epochs.
    pub segment_epochs: (usize, usize),
    /// Regime of the opening segment; `None` draws it.
    pub first_regime: Option<usize>,
    /// Recorded samples discarded per regime before its first epoch.
    pub burn_in: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            epoch_length: 1000,
            snr: Snr::INFINITE,
            switch_seed: 1,
            noise_seed: 2,
            segment_epochs: (20, 60),
            first_regime: Some(0),
            burn_in: 2000,
        }
    }
}

/// Samples with per-epoch ground-truth regime labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream<T> {
    pub samples: Vec<T>,
    /// Noise-free signal; equals `samples` when the SNR is infinite.
    pub clean: Vec<T>,
    pub labels: Vec<usize>,
    pub epoch_length: usize,
    pub snr: Snr,
    pub dt: T,
}

impl<T: Real> LabeledStream<T> {
    pub fn epochs(&self) -> usize {
        self.labels.len()
    }

    pub fn epoch(&self, j: usize) -> &[T] {
        &self.samples[j * self.epoch_length..(j + 1) * self.epoch_length]
    }

    pub fn epoch_chunks(&self) -> impl Iterator<Item = &[T]> {
        self.samples.chunks_exact(self.epoch_length)
    }
}

/// Draws the regime label of every epoch: segments of random length, each
/// switching to a uniformly chosen different regime. The stream opens in
/// `first` when given, otherwise in a uniformly drawn regime.
pub fn regime_schedule(
    regimes: usize,
    epochs: usize,
    segment_epochs: (usize, usize),
    first: Option<usize>,
    seed: u64,
) -> Result<Vec<usize>> {
    let (lo, hi) = segment_epochs;
    if regimes == 0 || lo == 0 || hi < lo {
        return Err(HsdfError::InvalidConfig(
            "need ≥1 regime and segment bounds 1 ≤ min ≤ max".into(),
        ));
    }
    if first.is_some_and(|f| f >= regimes) {
        return Err(HsdfError::InvalidConfig(format!("first regime must be below {regimes}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::with_capacity(epochs);
    let drawn = rng.gen_range(0..regimes);
    let mut current = first.unwrap_or(drawn);
    while labels.len() < epochs {
        let len = rng.gen_range(lo..=hi).min(epochs - labels.len());
        labels.extend(std::iter::repeat(current).take(len));
        if regimes > 1 {
            let others: Vec<usize> = (0..regimes).filter(|&r| r != current).collect();
            current = *others.choose(&mut rng).unwrap();
        }
    }
    Ok(labels)
}

/// Generates a labeled stream by switching among `regimes`.
pub fn make_stream<T: Real>(regimes: &[RegimeSpec<T>], config: &StreamConfig) -> Result<LabeledStream<T>> {
    if config.epochs == 0 || config.epoch_length == 0 {
        return Err(HsdfError::InvalidConfig("epochs and epoch_length must be positive".into()));
    }
    let labels = regime_schedule(regimes.len(), config.epochs, config.segment_epochs, config.first_regime, config.switch_seed)?;
    let mut states = Vec::with_capacity(regimes.len());
    for spec in regimes {
        let (_, s) = integrate_regime(spec, OscillatorState::default(), config.burn_in)?;
        states.push(s);
    }
    let mut clean = Vec::with_capacity(config.epochs * config.epoch_length);
    for &label in &labels {
        let (chunk, s) = integrate_regime(&regimes[label], states[label], config.epoch_length)?;
        states[label] = s;
        clean.extend(chunk);
    }
    let samples = add_noise(&clean, config.snr, config.noise_seed);
    let dt = regimes[0].dt;
    Ok(LabeledStream {
        samples,
        clean,
        labels,
        epoch_length: config.epoch_length,
        snr: config.snr,
        dt,
    })
}

/// Adds zero-mean Gaussian noise with variance `var(signal) / snr`.
pub fn add_noise<T: Real>(signal: &[T], snr: Snr, seed: u64) -> Vec<T> {
    let Some(ratio) = snr.0 else {
        return signal.to_vec();
    };
    let n = signal.len().max(1) as f64;
    let mean = signal.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = signal.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
    let sd = (var / ratio).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    signal
        .iter()
        .map(|&x| {
            let z: f64 = StandardNormal.sample(&mut rng);
            x + T::lit(sd * z)
        })
        .collect()
}

/// Provenance sidecar written next to an exported stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamProvenance {
    pub scenario: String,
    pub regimes: Vec<RegimeSpec<f64>>,
    #[serde(flatten)]
    pub config: StreamConfig,
    pub dt: f64,
}

/// Writes `t,x,epoch,label` rows.
pub fn write_stream_csv<T: Real, W: Write>(stream: &LabeledStream<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "epoch", "label"])?;
    let dt = stream.dt.as_f64();
    for (i, x) in stream.samples.iter().enumerate() {
        let epoch = i / stream.epoch_length;
        w.write_record([
            format!("{}", i as f64 * dt),
            format!("{}", x.as_f64()),
            epoch.to_string(),
            stream.labels[epoch].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the stream CSV and its JSON sidecar (`<path>.json`).
pub fn export_stream(
    stream: &LabeledStream<f64>,
    provenance: &StreamProvenance,
    csv_path: &Path,
) -> Result<()> {
    let file = std::fs::File::create(csv_path)?;
    write_stream_csv(stream, std::io::BufWriter::new(file))?;
    let sidecar = sidecar_path(csv_path);
    std::fs::write(sidecar, serde_json::to_string_pretty(provenance)?)?;
    Ok(())
}

pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    let mut p = csv_path.as_os_str().to_owned();
    p.push(".json");
    p.into()
}

/// Reads a stream CSV. The `x` column is required; `epoch` and `label` are
/// optional. Without an `epoch` column samples are chunked by `epoch_length`.
/// Returns the stream and whether ground-truth labels were present.
pub fn read_stream_csv<R: Read>(input: R, epoch_length: usize) -> Result<(LabeledStream<f64>, bool)> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let x_col = col("x").ok_or(HsdfError::MalformedInput {
        row: 1,
        msg: "missing `x` column".into(),
    })?;
    let (t_col, epoch_col, label_col) = (col("t"), col("epoch"), col("label"));
    let mut samples = Vec::new();
    let mut epoch_ids: Vec<usize> = Vec::new();
    let mut labels_per_row: Vec<usize> = Vec::new();
    let mut times = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| HsdfError::MalformedInput { row, msg: e.to_string() })?;
        let field = |c: usize| -> Result<&str> {
            rec.get(c).ok_or(HsdfError::MalformedInput { row, msg: "missing field".into() })
        };
        let parse_f = |c: usize| -> Result<f64> {
            let s = field(c)?;
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or(HsdfError::MalformedInput { row, msg: format!("bad number `{s}`") })
        };
        let parse_u = |c: usize| -> Result<usize> {
            let s = field(c)?;
            s.trim()
                .parse::<usize>()
                .map_err(|_| HsdfError::MalformedInput { row, msg: format!("bad integer `{s}`") })
        };
        samples.push(parse_f(x_col)?);
        if let Some(c) = t_col {
            times.push(parse_f(c)?);
        }
        if let Some(c) = epoch_col {
            epoch_ids.push(parse_u(c)?);
        }
        if let Some(c) = label_col {
            labels_per_row.push(parse_u(c)?);
        }
    }
    if samples.is_empty() {
        return Err(HsdfError::MalformedInput { row: 1, msg: "no data rows".into() });
    }
    let epoch_length = if epoch_ids.is_empty() {
        epoch_length
    } else {
        epoch_ids.iter().take_while(|&&e| e == epoch_ids[0]).count()
    };
    if epoch_length == 0 || samples.len() % epoch_length != 0 {
        return Err(HsdfError::MalformedInput {
            row: samples.len() + 1,
            msg: format!("{} samples do not form whole epochs of {epoch_length}", samples.len()),
        });
    }
    for (i, &e) in epoch_ids.iter().enumerate() {
        if e != i / epoch_length {
            return Err(HsdfError::MalformedInput { row: i + 2, msg: "epochs must be contiguous and equal-length".into() });
        }
    }
    let has_labels = !labels_per_row.is_empty();
    let labels = if has_labels {
        labels_per_row.chunks_exact(epoch_length).map(|c| c[0]).collect()
    } else {
        vec![0; samples.len() / epoch_length]
    };
    let dt = if times.len() >= 2 { times[1] - times[0] } else { 1.0 };
    Ok((
        LabeledStream {
            clean: samples.clone(),
            samples,
            labels,
            epoch_length,
            snr: Snr::INFINITE,
            dt,
        },
        has_labels,
    ))
}
