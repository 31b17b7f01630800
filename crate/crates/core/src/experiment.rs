//! Seeded Monte Carlo experiments: configuration parsing, NMSE sweeps over
//! the training length, rate evaluation after phase tuning, and CSV output.
//!
//! Configuration is a flat `key = value` text file. Blank lines and lines
//! starting with `#` are ignored; every key may appear at most once.
//!
//! | key | default |
//! |-----|---------|
//! | `n_h`, `n_v` | 8, 4 |
//! | `b` | 4 |
//! | `m` | `n_h·n_v` |
//! | `t_list` | `20,60,100` |
//! | `snr_db` | 5 (`inf` disables noise) |
//! | `n_p` | 3 |
//! | `trials` | 100 |
//! | `master_seed` | 0 |
//! | `methods` | `admm,ls,omp` |
//! | `tau_r`, `tau_z` | `auto` |
//! | `gamma`, `i_max`, `tol`, `ista_steps` | 0.1, 300, 1e-6, 20 |
//! | `output_path` | `results.csv` |
//! | `pilots` | `constant` (or `qpsk`) |
//! | `configs_per_symbol` | 1 |
//! | `omp_sparsity` | `n_p` |
//! | `timing` | `false` |

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::admm::{self, AdmmParams};
use crate::baselines::{self, StackedMeasurements};
use crate::channel::{assemble_channel, dft_dictionary, draw_paths, BeamspaceDictionary, ChannelRealization, RisGeometry};
use crate::sampling::{
    codebook_size_feasible, draw_codebook, draw_schedule, phase_set, simulate_training, ConfigCodebook, NoiseModel,
    ObservationMatrix, PhaseSet, SamplingSchedule, TrainingSequence, MAX_PHASE_BITS,
};
use crate::seed::{rng_from_seed, stream_seed, trial_seed, Stream};
use crate::tuning::{achievable_rate, candidate_count, exhaustive_search, DEFAULT_SEARCH_BUDGET};
use crate::{CVector, Error, Result};

/// Channel estimator compared in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Admm,
    Ls,
    Omp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Admm => "admm",
            Method::Ls => "ls",
            Method::Omp => "omp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "admm" => Ok(Method::Admm),
            "ls" => Ok(Method::Ls),
            "omp" => Ok(Method::Omp),
            other => Err(format!("unknown method `{other}` (expected admm, ls or omp)")),
        }
    }
}

/// A regularisation weight: data-relative default or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotKind {
    Constant,
    Qpsk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub geometry: RisGeometry,
    pub bits: u32,
    pub m: usize,
    pub t_list: Vec<usize>,
    /// `+∞` means noiseless training.
    pub snr_db: f64,
    pub n_paths: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub tau_r: Weight,
    pub tau_z: Weight,
    pub gamma: f64,
    pub i_max: usize,
    pub tol: f64,
    pub ista_steps: usize,
    pub output_path: PathBuf,
    pub pilots: PilotKind,
    pub configs_per_symbol: usize,
    pub omp_sparsity: usize,
    /// Record per-row wall time. Off by default so output is reproducible
    /// byte for byte.
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn n(&self) -> usize {
        self.geometry.n()
    }

    pub fn noise(&self) -> NoiseModel {
        if self.snr_db == f64::INFINITY {
            NoiseModel::Noiseless
        } else {
            NoiseModel::from_snr_db(self.snr_db)
        }
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    pub fn phases(&self) -> PhaseSet {
        phase_set(self.bits).expect("bits validated at parse time")
    }

    /// Solver parameters for one observation set.
    pub fn admm_params(&self, obs: &ObservationMatrix, codebook: &ConfigCodebook) -> Result<AdmmParams> {
        let auto = admm::default_weight(obs, admm::measurement_noise_variance(codebook, self.noise()), self.n_paths);
        let pick = |w: Weight| match w {
            Weight::Auto => auto,
            Weight::Fixed(v) => v,
        };
        AdmmParams::new(pick(self.tau_r), pick(self.tau_z), self.gamma, self.i_max, self.tol, self.ista_steps)
    }
}

const KEYS: &[&str] = &[
    "n_h",
    "n_v",
    "b",
    "m",
    "t_list",
    "snr_db",
    "n_p",
    "trials",
    "master_seed",
    "methods",
    "tau_r",
    "tau_z",
    "gamma",
    "i_max",
    "tol",
    "ista_steps",
    "output_path",
    "pilots",
    "configs_per_symbol",
    "omp_sparsity",
    "timing",
];

fn parse_error(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

struct Entries<'a> {
    values: HashMap<&'a str, (usize, &'a str)>,
}

impl<'a> Entries<'a> {
    fn line(&self, key: &str) -> usize {
        self.values.get(key).map_or(0, |(l, _)| *l)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(default),
            Some(&(line, raw)) => raw
                .parse()
                .map_err(|e: T::Err| parse_error(line, key, format!("cannot parse `{raw}`: {e}"))),
        }
    }

    fn check(&self, key: &str, ok: bool, message: impl Into<String>) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(parse_error(self.line(key), key, message))
        }
    }

    fn weight(&self, key: &str) -> Result<Weight> {
        match self.values.get(key) {
            None | Some((_, "auto")) => Ok(Weight::Auto),
            Some(&(line, raw)) => match raw.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(Weight::Fixed(v)),
                _ => Err(parse_error(line, key, format!("expected `auto` or a positive number, got `{raw}`"))),
            },
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut values = HashMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(parse_error(line, trimmed, "expected `key = value`"));
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(parse_error(line, key, "unknown key"));
        }
        if let Some((first, _)) = values.insert(key, (line, value)) {
            return Err(parse_error(line, key, format!("duplicate key, first set on line {first}")));
        }
    }
    let e = Entries { values };

    let n_h = e.get("n_h", 8usize)?;
    let n_v = e.get("n_v", 4usize)?;
    e.check("n_h", n_h >= 1, "must be at least 1")?;
    e.check("n_v", n_v >= 1, "must be at least 1")?;
    let geometry = RisGeometry::new(n_h, n_v).map_err(|err| parse_error(e.line("n_h"), "n_h", err.to_string()))?;
    let n = geometry.n();

    let bits = e.get("b", 4u32)?;
    e.check("b", (1..=MAX_PHASE_BITS).contains(&bits), format!("must be within 1..={MAX_PHASE_BITS}"))?;
    let m = e.get("m", n)?;
    e.check("m", m >= 1, "must be at least 1")?;
    e.check(
        "m",
        codebook_size_feasible(m, bits, n),
        format!("exceeds the {n}-element surface's (2^{bits})^{n} configurations"),
    )?;

    let t_list = match e.values.get("t_list") {
        None => vec![20, 60, 100],
        Some(&(line, raw)) => {
            if raw.is_empty() {
                return Err(parse_error(line, "t_list", "must list at least one training length"));
            }
            raw.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|err| parse_error(line, "t_list", format!("`{}`: {err}", s.trim())))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    e.check("t_list", t_list.iter().all(|&t| t >= 1), "training lengths must be positive")?;
    e.check(
        "t_list",
        t_list.windows(2).all(|w| w[0] < w[1]),
        "training lengths must be strictly increasing",
    )?;

    let snr_db = e.get("snr_db", 5.0f64)?;
    e.check("snr_db", !snr_db.is_nan() && snr_db != f64::NEG_INFINITY, "must be a number or inf")?;
    let n_paths = e.get("n_p", 3usize)?;
    e.check("n_p", n_paths >= 1, "must be at least 1")?;
    let trials = e.get("trials", 100usize)?;
    e.check("trials", trials >= 1, "must be at least 1")?;
    let master_seed = e.get("master_seed", 0u64)?;

    let methods = match e.values.get("methods") {
        None => vec![Method::Admm, Method::Ls, Method::Omp],
        Some(&(line, raw)) => {
            let list = raw
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<Method>().map_err(|msg| parse_error(line, "methods", msg)))
                .collect::<Result<Vec<_>>>()?;
            if list.is_empty() {
                return Err(parse_error(line, "methods", "must name at least one method"));
            }
            if (1..list.len()).any(|i| list[..i].contains(&list[i])) {
                return Err(parse_error(line, "methods", "lists a method twice"));
            }
            list
        }
    };

    let tau_r = e.weight("tau_r")?;
    let tau_z = e.weight("tau_z")?;
    let gamma = e.get("gamma", admm::DEFAULT_GAMMA)?;
    e.check("gamma", gamma > 0.0 && gamma < 1.0, "must lie in (0, 1)")?;
    let i_max = e.get("i_max", admm::DEFAULT_I_MAX)?;
    e.check("i_max", i_max >= 1, "must be at least 1")?;
    let tol = e.get("tol", admm::DEFAULT_TOL)?;
    e.check("tol", tol > 0.0, "must be positive")?;
    let ista_steps = e.get("ista_steps", admm::DEFAULT_ISTA_STEPS)?;
    e.check("ista_steps", ista_steps >= 1, "must be at least 1")?;

    let output_path = PathBuf::from(e.get("output_path", "results.csv".to_string())?);
    e.check("output_path", !output_path.as_os_str().is_empty(), "must not be empty")?;

    let pilots = match e.values.get("pilots") {
        None | Some((_, "constant")) => PilotKind::Constant,
        Some((_, "qpsk")) => PilotKind::Qpsk,
        Some(&(line, raw)) => return Err(parse_error(line, "pilots", format!("expected constant or qpsk, got `{raw}`"))),
    };
    let configs_per_symbol = e.get("configs_per_symbol", 1usize)?;
    e.check("configs_per_symbol", configs_per_symbol >= 1, "must be at least 1")?;
    e.check(
        "configs_per_symbol",
        t_list.iter().all(|t| t % configs_per_symbol == 0),
        "must divide every training length",
    )?;
    let omp_sparsity = e.get("omp_sparsity", n_paths)?;
    e.check(
        "omp_sparsity",
        omp_sparsity >= 1 && omp_sparsity <= n && omp_sparsity <= t_list[0],
        format!("must lie within 1..=min(N, smallest T) = {}", n.min(t_list[0])),
    )?;
    let timing = e.get("timing", false)?;

    Ok(ExperimentConfig {
        geometry,
        bits,
        m,
        t_list,
        snr_db,
        n_paths,
        trials,
        master_seed,
        methods,
        tau_r,
        tau_z,
        gamma,
        i_max,
        tol,
        ista_steps,
        output_path,
        pilots,
        configs_per_symbol,
        omp_sparsity,
        timing,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// One output record.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub trial: usize,
    /// `admm`, `ls`, `omp`, or `perfect` for true-channel tuning.
    pub method: String,
    pub t: usize,
    /// `None` when the estimator failed on this instance.
    pub nmse: Option<f64>,
    pub rate_bps_hz: Option<f64>,
    pub seed: u64,
    pub wall_ms: Option<f64>,
}

pub const CSV_HEADER: &str = "trial,method,t,nmse,rate_bps_hz,seed,wall_ms";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9e}")).unwrap_or_default()
}

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.trial,
            self.method,
            self.t,
            fmt_opt(self.nmse),
            fmt_opt(self.rate_bps_hz),
            self.seed,
            fmt_opt(self.wall_ms)
        )
    }
}

/// Mean over the rows of one `(method, t)` cell that carry a value.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub t: usize,
    pub mean_nmse: Option<f64>,
    pub mean_rate_bps_hz: Option<f64>,
    /// Mean rate relative to the mean perfect-CSI rate (rate evaluation only).
    pub rate_ratio: Option<f64>,
    pub count: usize,
}

/// One simulated training phase.
#[derive(Debug, Clone)]
pub struct LinkTraining {
    pub observations: ObservationMatrix,
    pub schedule: SamplingSchedule,
    pub pilots: TrainingSequence,
}

/// Streams used by the two training phases.
#[derive(Debug, Clone, Copy)]
pub struct LinkStreams {
    pub schedule: Stream,
    pub pilots: Stream,
    pub noise: Stream,
}

pub const BS_LINK: LinkStreams = LinkStreams {
    schedule: Stream::Schedule,
    pilots: Stream::Pilots,
    noise: Stream::Noise,
};

pub const UE_LINK: LinkStreams = LinkStreams {
    schedule: Stream::UeSchedule,
    pilots: Stream::UePilots,
    noise: Stream::UeNoise,
};

fn draw_pilots(config: &ExperimentConfig, seed: u64, t: usize) -> Result<TrainingSequence> {
    let symbols = t / config.configs_per_symbol;
    let base = match config.pilots {
        PilotKind::Constant => TrainingSequence::constant(symbols)?,
        PilotKind::Qpsk => TrainingSequence::qpsk(&mut rng_from_seed(seed), symbols)?,
    };
    base.repeated(config.configs_per_symbol)
}

pub fn simulate_link(
    config: &ExperimentConfig,
    channel: &ChannelRealization,
    codebook: &ConfigCodebook,
    seed: u64,
    t: usize,
    streams: LinkStreams,
) -> Result<LinkTraining> {
    let schedule = draw_schedule(&mut rng_from_seed(stream_seed(seed, t, streams.schedule)), config.m, t)?;
    let pilots = draw_pilots(config, stream_seed(seed, t, streams.pilots), t)?;
    let observations = simulate_training(
        channel,
        codebook,
        &schedule,
        &pilots,
        config.noise(),
        &mut rng_from_seed(stream_seed(seed, t, streams.noise)),
    )?;
    Ok(LinkTraining {
        observations,
        schedule,
        pilots,
    })
}

fn stacked(link: &LinkTraining, codebook: &ConfigCodebook, dictionary: &BeamspaceDictionary) -> Result<StackedMeasurements> {
    baselines::stack(&link.observations, codebook, &link.schedule, dictionary, &link.pilots)
}

/// Beamspace estimate of one link by `method`.
pub fn estimate_beamspace(
    config: &ExperimentConfig,
    method: Method,
    link: &LinkTraining,
    codebook: &ConfigCodebook,
    dictionary: &BeamspaceDictionary,
) -> Result<CVector> {
    match method {
        Method::Admm => {
            let params = config.admm_params(&link.observations, codebook)?;
            admm::run(&link.observations, codebook, dictionary, &link.pilots, &params).map(|r| r.z_hat)
        }
        Method::Ls => baselines::ls_estimate(&stacked(link, codebook, dictionary)?),
        Method::Omp => baselines::omp_estimate(&stacked(link, codebook, dictionary)?, config.omp_sparsity),
    }
}

/// Everything drawn once per trial, shared by all training lengths.
pub struct TrialSetup {
    pub seed: u64,
    pub dictionary: BeamspaceDictionary,
    pub codebook: ConfigCodebook,
    pub bs_ris: ChannelRealization,
    pub ris_ue: ChannelRealization,
}

pub fn trial_setup(config: &ExperimentConfig, trial: usize) -> Result<TrialSetup> {
    let seed = trial_seed(config.master_seed, trial as u64);
    let geometry = config.geometry;
    let dictionary = dft_dictionary(geometry);
    let draw_channel = |stream| -> Result<ChannelRealization> {
        let paths = draw_paths(&mut rng_from_seed(stream_seed(seed, 0, stream)), config.n_paths, 1.0)?;
        assemble_channel(paths, geometry, &dictionary)
    };
    let bs_ris = draw_channel(Stream::BsRisChannel)?;
    let ris_ue = draw_channel(Stream::RisUeChannel)?;
    let codebook = draw_codebook(
        &mut rng_from_seed(stream_seed(seed, 0, Stream::Codebook)),
        config.m,
        geometry,
        &config.phases(),
    )?;
    Ok(TrialSetup {
        seed,
        dictionary,
        codebook,
        bs_ris,
        ris_ue,
    })
}

fn report(trial: usize, method: &str, t: usize, err: &Error) {
    eprintln!("trial {trial}, method {method}, T={t}: {err}");
}

fn timed<T>(timing: bool, f: impl FnOnce() -> T) -> (T, Option<f64>) {
    let start = Instant::now();
    let out = f();
    (out, timing.then(|| start.elapsed().as_secs_f64() * 1e3))
}

/// Rows of one NMSE-sweep trial, ordered by method then training length.
fn sweep_trial(config: &ExperimentConfig, trial: usize) -> Result<Vec<ResultRow>> {
    let setup = trial_setup(config, trial)?;
    let mut cells: Vec<Vec<ResultRow>> = vec![Vec::with_capacity(config.t_list.len()); config.methods.len()];
    for &t in &config.t_list {
        let link = simulate_link(config, &setup.bs_ris, &setup.codebook, setup.seed, t, BS_LINK)?;
        for (slot, &method) in config.methods.iter().enumerate() {
            let (estimate, wall_ms) = timed(config.timing, || {
                estimate_beamspace(config, method, &link, &setup.codebook, &setup.dictionary)
                    .and_then(|z| admm::nmse(&setup.bs_ris.beamspace, &z))
            });
            let nmse = estimate.map_err(|err| report(trial, method.name(), t, &err)).ok();
            cells[slot].push(ResultRow {
                trial,
                method: method.name().to_string(),
                t,
                nmse,
                rate_bps_hz: None,
                seed: setup.seed,
                wall_ms,
            });
        }
    }
    Ok(cells.into_iter().flatten().collect())
}

/// NMSE sweep rows in `(trial, method, t)` order, without touching the disk.
pub fn compute_nmse_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let per_trial: Vec<Vec<ResultRow>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| sweep_trial(config, trial))
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

fn rate_trial(config: &ExperimentConfig, trial: usize) -> Result<Vec<ResultRow>> {
    let setup = trial_setup(config, trial)?;
    let phases = config.phases();
    let snr = config.snr_linear();
    let (h1, h2) = (&setup.bs_ris.spatial, &setup.ris_ue.spatial);
    let (perfect, perfect_ms) = timed(config.timing, || -> Result<f64> {
        let best = exhaustive_search(h1, h2, &phases)?;
        achievable_rate(h1, h2, &best.config, snr)
    });
    let perfect = perfect?;

    let mut cells: Vec<Vec<ResultRow>> = vec![Vec::with_capacity(config.t_list.len()); config.methods.len() + 1];
    for &t in &config.t_list {
        let bs = simulate_link(config, &setup.bs_ris, &setup.codebook, setup.seed, t, BS_LINK)?;
        let ue = simulate_link(config, &setup.ris_ue, &setup.codebook, setup.seed, t, UE_LINK)?;
        for (slot, &method) in config.methods.iter().enumerate() {
            let (outcome, wall_ms) = timed(config.timing, || -> Result<(f64, f64)> {
                let z1 = estimate_beamspace(config, method, &bs, &setup.codebook, &setup.dictionary)?;
                let z2 = estimate_beamspace(config, method, &ue, &setup.codebook, &setup.dictionary)?;
                let nmse = 0.5
                    * (admm::nmse(&setup.bs_ris.beamspace, &z1)? + admm::nmse(&setup.ris_ue.beamspace, &z2)?);
                let h1_hat = setup.dictionary.to_spatial(&z1)?;
                let h2_hat = setup.dictionary.to_spatial(&z2)?;
                let best = exhaustive_search(&h1_hat, &h2_hat, &phases)?;
                Ok((nmse, achievable_rate(h1, h2, &best.config, snr)?))
            });
            let outcome = match outcome {
                Ok(v) => Some(v),
                Err(err @ Error::BudgetExceeded { .. }) => return Err(err),
                Err(err) => {
                    report(trial, method.name(), t, &err);
                    None
                }
            };
            cells[slot].push(ResultRow {
                trial,
                method: method.name().to_string(),
                t,
                nmse: outcome.map(|o| o.0),
                rate_bps_hz: outcome.map(|o| o.1),
                seed: setup.seed,
                wall_ms,
            });
        }
        cells[config.methods.len()].push(ResultRow {
            trial,
            method: "perfect".to_string(),
            t,
            nmse: Some(0.0),
            rate_bps_hz: Some(perfect),
            seed: setup.seed,
            wall_ms: perfect_ms,
        });
    }
    Ok(cells.into_iter().flatten().collect())
}

/// Rate-evaluation rows: for each trial, every method's estimated-CSI rate
/// followed by the perfect-CSI rate, each over the training lengths.
pub fn compute_rate_eval(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let required = candidate_count(&config.phases(), config.n());
    if required > DEFAULT_SEARCH_BUDGET {
        return Err(Error::BudgetExceeded {
            required,
            budget: DEFAULT_SEARCH_BUDGET,
        });
    }
    let per_trial: Vec<Vec<ResultRow>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| rate_trial(config, trial))
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Per `(method, t)` means in first-appearance order of methods.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut methods: Vec<&str> = Vec::new();
    let mut ts: Vec<usize> = Vec::new();
    for row in rows {
        if !methods.contains(&row.method.as_str()) {
            methods.push(&row.method);
        }
        if !ts.contains(&row.t) {
            ts.push(row.t);
        }
    }
    ts.sort_unstable();
    let perfect_rate = |t: usize| {
        mean(rows.iter().filter(|r| r.method == "perfect" && r.t == t).filter_map(|r| r.rate_bps_hz))
    };
    let mut out = Vec::new();
    for method in methods {
        for &t in &ts {
            let cell: Vec<&ResultRow> = rows.iter().filter(|r| r.method == method && r.t == t).collect();
            if cell.is_empty() {
                continue;
            }
            let mean_rate = mean(cell.iter().filter_map(|r| r.rate_bps_hz));
            out.push(SummaryRow {
                method: method.to_string(),
                t,
                mean_nmse: mean(cell.iter().filter_map(|r| r.nmse)),
                mean_rate_bps_hz: mean_rate,
                rate_ratio: mean_rate.zip(perfect_rate(t)).map(|(r, p)| r / p),
                count: cell.len(),
            });
        }
    }
    out
}

/// `results.csv` → `results_summary.dat`
pub fn summary_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}_summary.dat"))
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_error(path))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{CSV_HEADER}").map_err(io_error(path))?;
    for row in rows {
        writeln!(out, "{}", row.to_csv()).map_err(io_error(path))?;
    }
    out.flush().map_err(io_error(path))
}

fn fmt_dat(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9e}")).unwrap_or_else(|| "nan".to_string())
}

/// Whitespace-separated table, one block per method separated by two blank
/// lines, so `plot 'x.dat' index k using 1:2` selects method `k`.
pub fn write_summary(path: &Path, summary: &[SummaryRow]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_error(path))?;
    let mut out = BufWriter::new(file);
    let mut current: Option<&str> = None;
    for row in summary {
        if current != Some(row.method.as_str()) {
            if current.is_some() {
                write!(out, "\n\n").map_err(io_error(path))?;
            }
            writeln!(out, "# method {}", row.method).map_err(io_error(path))?;
            writeln!(out, "# t mean_nmse mean_rate_bps_hz rate_ratio count").map_err(io_error(path))?;
            current = Some(&row.method);
        }
        writeln!(
            out,
            "{} {} {} {} {}",
            row.t,
            fmt_dat(row.mean_nmse),
            fmt_dat(row.mean_rate_bps_hz),
            fmt_dat(row.rate_ratio),
            row.count
        )
        .map_err(io_error(path))?;
    }
    out.flush().map_err(io_error(path))
}

/// Files written by a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

fn persist(config: &ExperimentConfig, rows: Vec<ResultRow>) -> Result<RunOutput> {
    let csv_path = config.output_path.clone();
    let summary_path = summary_path(&csv_path);
    let summary = summarize(&rows);
    write_rows(&csv_path, &rows)?;
    write_summary(&summary_path, &summary)?;
    Ok(RunOutput {
        rows,
        summary,
        csv_path,
        summary_path,
    })
}

/// Runs the NMSE sweep and writes the CSV plus its summary.
pub fn run_nmse_sweep(config: &ExperimentConfig) -> Result<RunOutput> {
    let rows = compute_nmse_sweep(config)?;
    persist(config, rows)
}

/// Runs the rate evaluation and writes the CSV plus its summary.
pub fn run_rate_eval(config: &ExperimentConfig) -> Result<RunOutput> {
    let rows = compute_rate_eval(config)?;
    persist(config, rows)
}

/// Diagnostics of a single estimation instance (trial 0, every training
/// length).
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceReport {
    pub t: usize,
    pub method: Method,
    pub nmse: f64,
    /// ADMM only: iterations and final primal residuals.
    pub iterations: Option<usize>,
    pub final_residuals: Option<(f64, f64)>,
}

pub fn estimate_instance(config: &ExperimentConfig) -> Result<Vec<InstanceReport>> {
    let setup = trial_setup(config, 0)?;
    let mut out = Vec::new();
    for &t in &config.t_list {
        let link = simulate_link(config, &setup.bs_ris, &setup.codebook, setup.seed, t, BS_LINK)?;
        for &method in &config.methods {
            let (z, iterations, final_residuals) = if method == Method::Admm {
                let params = config.admm_params(&link.observations, &setup.codebook)?;
                let r = admm::run(&link.observations, &setup.codebook, &setup.dictionary, &link.pilots, &params)?;
                let last = r.primal_residuals.last().copied();
                (r.z_hat, Some(r.iterations_used), last)
            } else {
                (estimate_beamspace(config, method, &link, &setup.codebook, &setup.dictionary)?, None, None)
            };
            out.push(InstanceReport {
                t,
                method,
                nmse: admm::nmse(&setup.bs_ris.beamspace, &z)?,
                iterations,
                final_residuals,
            });
        }
    }
    Ok(out)
}
