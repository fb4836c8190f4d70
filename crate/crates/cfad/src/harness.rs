//! Monte-Carlo experiment driver: trial execution, missed-detection /
//! false-alarm threshold sweeps, equal-error-rate extraction, and the
//! experiment presets exposed through the CLI.
//!
//! Trials are independent work items over per-trial RNG substreams; results
//! are merged in trial-index order, so the emitted CSV is byte-identical
//! regardless of worker count.

use crate::channel::ChannelModel;
use crate::consensus::{run_algorithm1, Algorithm1Options};
use crate::rng::{substream, StreamClass};
use crate::scenario::{rayleigh_distance, Scenario, ScenarioConfig};
use crate::solver::{centralized_cd_with_history, SolverParams};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Default number of Monte-Carlo trials per experiment point.
pub const DEFAULT_TRIALS: usize = 500;

/// Default threshold-grid resolution.
pub const DEFAULT_GAMMA_GRID: usize = 512;

/// Outcome of one Monte-Carlo trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    /// Final continuous activity estimate.
    pub a_cont: Vec<f64>,
    /// Ground-truth activity (0/1 entries).
    pub truth: Vec<f64>,
    pub iterations_used: usize,
    pub wall_time: f64,
    /// Estimate after each outer iteration, when recording was requested.
    pub history: Option<Vec<Vec<f64>>>,
}

impl TrialResult {
    /// Estimate frozen at 1-based outer iteration `i` (clamped to the last
    /// recorded iteration). Falls back to the final estimate without history.
    pub fn a_at_iteration(&self, i: usize) -> &[f64] {
        match &self.history {
            Some(h) if !h.is_empty() => &h[i.clamp(1, h.len()) - 1],
            _ => &self.a_cont,
        }
    }
}

/// One point of a threshold sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RocPoint {
    pub gamma: f64,
    pub pm: f64,
    pub pf: f64,
}

/// Pooled threshold sweep with its equal-error rate.
#[derive(Debug, Clone, Serialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    /// Missed-detection probability at the PM = PF crossing.
    pub eer: f64,
    /// Set when the pooled curves never cross; `eer` is then taken at the
    /// grid point minimizing |PM - PF|.
    pub no_crossing: bool,
}

/// Missed-detection and false-alarm rates of `a_cont` against a binary truth
/// at threshold `gamma`.
pub fn pm_pf(a_cont: &[f64], truth: &[f64], gamma: f64) -> Result<(f64, f64)> {
    let active = truth.iter().filter(|&&t| t >= 0.5).count();
    let inactive = truth.len() - active;
    if active == 0 || inactive == 0 {
        return Err(Error::InvalidArgument(
            "truth needs at least one active and one inactive device".into(),
        ));
    }
    let mut missed = 0;
    let mut false_alarm = 0;
    for (&a, &t) in a_cont.iter().zip(truth) {
        if t >= 0.5 {
            if a < gamma {
                missed += 1;
            }
        } else if a >= gamma {
            false_alarm += 1;
        }
    }
    Ok((missed as f64 / active as f64, false_alarm as f64 / inactive as f64))
}

/// Uniform threshold grid of `n` points covering [0, 1].
pub fn gamma_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Pool PM/PF over (estimate, truth) pairs at each threshold and locate the
/// equal-error crossing by linear interpolation between the two grid points
/// where the sign of PM - PF flips.
pub fn equal_error(pairs: &[(&[f64], &[f64])], gammas: &[f64]) -> Result<RocCurve> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no trials to pool".into()));
    }
    let mut points = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let mut pm_sum = 0.0;
        let mut pf_sum = 0.0;
        for (a, t) in pairs {
            let (pm, pf) = pm_pf(a, t, g)?;
            pm_sum += pm;
            pf_sum += pf;
        }
        points.push(RocPoint {
            gamma: g,
            pm: pm_sum / pairs.len() as f64,
            pf: pf_sum / pairs.len() as f64,
        });
    }
    let mut eer = None;
    for w in points.windows(2) {
        let d0 = w[0].pm - w[0].pf;
        let d1 = w[1].pm - w[1].pf;
        if d0 <= 0.0 && d1 >= 0.0 {
            let t = if d1 != d0 { -d0 / (d1 - d0) } else { 0.0 };
            eer = Some(w[0].pm + t * (w[1].pm - w[0].pm));
            break;
        }
    }
    let (eer, no_crossing) = match eer {
        Some(e) => (e, false),
        None => {
            let best = points
                .iter()
                .min_by(|a, b| {
                    (a.pm - a.pf)
                        .abs()
                        .partial_cmp(&(b.pm - b.pf).abs())
                        .unwrap()
                })
                .unwrap();
            (best.pm, true)
        }
    };
    Ok(RocCurve {
        points,
        eer,
        no_crossing,
    })
}

/// [`equal_error`] over final estimates of finished trials.
pub fn equal_error_trials(trials: &[TrialResult], gammas: &[f64]) -> Result<RocCurve> {
    let pairs: Vec<(&[f64], &[f64])> = trials
        .iter()
        .map(|t| (t.a_cont.as_slice(), t.truth.as_slice()))
        .collect();
    equal_error(&pairs, gammas)
}

/// [`equal_error`] over estimates frozen at outer iteration `i`.
pub fn equal_error_at_iteration(
    trials: &[TrialResult],
    i: usize,
    gammas: &[f64],
) -> Result<RocCurve> {
    let pairs: Vec<(&[f64], &[f64])> = trials
        .iter()
        .map(|t| (t.a_at_iteration(i), t.truth.as_slice()))
        .collect();
    equal_error(&pairs, gammas)
}

/// Which estimator a campaign runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Distributed,
    Centralized,
}

/// Trial-campaign options.
#[derive(Debug, Clone)]
pub struct CampaignOptions {
    pub detector: Detector,
    pub trials: usize,
    pub max_iters: usize,
    /// Consensus stopping tolerance (zero disables early stopping).
    pub tol: f64,
    pub record_history: bool,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        Self {
            detector: Detector::Distributed,
            trials: DEFAULT_TRIALS,
            max_iters: crate::consensus::DEFAULT_MAX_ITERS,
            tol: crate::consensus::DEFAULT_TOL,
            record_history: false,
        }
    }
}

/// Run one seeded trial: fresh scenario, channels and noise from the
/// per-trial substreams, then the selected detector.
pub fn run_one_trial(
    cfg: &ScenarioConfig,
    params: &SolverParams,
    opts: &CampaignOptions,
    trial: u64,
) -> Result<TrialResult> {
    let start = Instant::now();
    let scenario = Scenario::generate_trial(cfg, trial)?;
    let model = ChannelModel::new(&scenario);
    let mut ch = substream(cfg.seed, StreamClass::Channels, trial);
    let mut no = substream(cfg.seed, StreamClass::Noise, trial);
    let signals = model.synthesize_received(&scenario, &scenario.truth, &mut ch, &mut no);
    let (a_cont, history, iterations_used) = match opts.detector {
        Detector::Distributed => {
            let out = run_algorithm1(
                &scenario,
                &signals,
                &model,
                params,
                &Algorithm1Options {
                    max_iters: opts.max_iters,
                    tol: opts.tol,
                    record_trace: false,
                },
            )?;
            let history = opts.record_history.then(|| out.history.clone());
            (out.a, history, out.iterations_used)
        }
        Detector::Centralized => {
            let (a, hist) =
                centralized_cd_with_history(&signals, &scenario, &model, params, opts.max_iters)?;
            let used = hist.len();
            let history = opts.record_history.then_some(hist);
            (a, history, used)
        }
    };
    Ok(TrialResult {
        a_cont,
        truth: scenario.truth.0,
        iterations_used,
        wall_time: start.elapsed().as_secs_f64(),
    history,
    })
}

/// Run a full campaign in parallel over per-trial substreams, merging
/// results in trial-index order.
pub fn run_trials(
    cfg: &ScenarioConfig,
    params: &SolverParams,
    opts: &CampaignOptions,
) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    let active = cfg.num_active();
    if active == 0 || active >= cfg.num_devices {
        return Err(Error::Config(
            "campaign needs at least one active and one inactive device".into(),
        ));
    }
    (0..opts.trials as u64)
        .into_par_iter()
        .map(|t| run_one_trial(cfg, params, opts, t))
        .collect()
}

/// Experiment presets mirroring the headline evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Error vs outer iteration for 24 and 32 antennas, distributed and
    /// centralized.
    Fig2aIterations,
    /// 72 total antennas split equally across 1..=12 APs.
    Fig2bApSweep,
    /// Wavelength sweep over device counts at fixed signature length 6.
    Fig3aDeviceSweep,
    /// Wavelength sweep over signature lengths at fixed 100 devices.
    Fig3bSeqlenSweep,
    /// Single configuration; emits the pooled threshold sweep.
    Custom,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2a_iterations" => Ok(Self::Fig2aIterations),
            "fig2b_ap_sweep" => Ok(Self::Fig2bApSweep),
            "fig3a_device_sweep" => Ok(Self::Fig3aDeviceSweep),
            "fig3b_seqlen_sweep" => Ok(Self::Fig3bSeqlenSweep),
            "custom" => Ok(Self::Custom),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset '{other}' (expected fig2a_iterations, fig2b_ap_sweep, \
                 fig3a_device_sweep, fig3b_seqlen_sweep, or custom)"
            ))),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fig2aIterations => "fig2a_iterations",
            Self::Fig2bApSweep => "fig2b_ap_sweep",
            Self::Fig3aDeviceSweep => "fig3a_device_sweep",
            Self::Fig3bSeqlenSweep => "fig3b_seqlen_sweep",
            Self::Custom => "custom",
        }
    }
}

/// Full experiment description: preset, base scenario, campaign sizes.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub scenario: ScenarioConfig,
    pub trials: usize,
    pub max_iters: usize,
    pub gamma_points: usize,
}

impl ExperimentConfig {
    pub fn new(preset: Preset, scenario: ScenarioConfig) -> Self {
        Self {
            preset,
            scenario,
            trials: DEFAULT_TRIALS,
            max_iters: crate::consensus::DEFAULT_MAX_ITERS,
            gamma_points: DEFAULT_GAMMA_GRID,
        }
    }
}

/// Total-antenna splits for the AP sweep: (num_aps, antennas_per_ap) pairs
/// for divisors of `total`, plus the skipped AP counts.
pub fn ap_sweep_splits(total: usize, max_aps: usize) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut splits = Vec::new();
    let mut skipped = Vec::new();
    for m in 1..=max_aps {
        if total % m == 0 {
            splits.push((m, total / m));
        } else {
            skipped.push(m);
        }
    }
    (splits, skipped)
}

/// Carrier wavelengths for the Rayleigh-distance sweeps, in meters.
pub fn sweep_wavelengths() -> Vec<f64> {
    vec![0.05, 0.10, 0.15, 0.20, 0.25, 0.30]
}

/// Device-count grid for the wavelength/device sweep.
pub fn sweep_device_counts() -> Vec<usize> {
    vec![50, 100, 150]
}

/// Signature-length grid for the wavelength/length sweep.
pub fn sweep_signature_lengths() -> Vec<usize> {
    vec![4, 6, 8, 10]
}

/// Paths written by an experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    preset: &'static str,
    scenario: &'a ScenarioConfig,
    trials: usize,
    max_iters: usize,
    gamma_points: usize,
    seed: u64,
    rayleigh_distances_m: Vec<f64>,
    skipped_ap_counts: Vec<usize>,
    rows: usize,
    eer_summary: Vec<serde_json::Value>,
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

fn check_curve_monotone(curve: &RocCurve) -> Result<()> {
    for w in curve.points.windows(2) {
        if w[1].pm < w[0].pm - 1e-12 || w[1].pf > w[0].pf + 1e-12 {
            return Err(Error::NonFinite("non-monotone pooled threshold sweep"));
        }
    }
    Ok(())
}

/// Run the configured campaign and write `<preset>.csv` plus
/// `<preset>_manifest.json` under `out_dir`.
pub fn run_experiment(exp: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    std::fs::create_dir_all(out_dir)?;
    let gammas = gamma_grid(exp.gamma_points);
    let params = SolverParams::default();
    let mut csv_rows: Vec<Vec<String>> = Vec::new();
    let header: Vec<&str>;
    let mut rayleigh_list = Vec::new();
    let mut skipped = Vec::new();
    let mut eer_summary = Vec::new();

    match exp.preset {
        Preset::Fig2aIterations => {
            header = vec!["variant", "antennas_per_ap", "iteration", "eer"];
            for &k in &[24usize, 32] {
                let cfg = ScenarioConfig {
                    antennas_per_ap: k,
                    ..exp.scenario.clone()
                };
                for detector in [Detector::Distributed, Detector::Centralized] {
                    let opts = CampaignOptions {
                        detector,
                        trials: exp.trials,
                        max_iters: exp.max_iters,
                        tol: 0.0,
                        record_history: true,
                    };
                    let trials = run_trials(&cfg, &params, &opts)?;
                    let variant = match detector {
                        Detector::Distributed => "distributed",
                        Detector::Centralized => "centralized",
                    };
                    for it in 1..=exp.max_iters {
                        let curve = equal_error_at_iteration(&trials, it, &gammas)?;
                        check_curve_monotone(&curve)?;
                        csv_rows.push(vec![
                            variant.to_string(),
                            k.to_string(),
                            it.to_string(),
                            fmt(curve.eer),
                        ]);
                        if it == exp.max_iters {
                            eer_summary.push(serde_json::json!({
                                "variant": variant, "antennas_per_ap": k, "eer": curve.eer,
                            }));
                        }
                    }
                }
            }
        }
        Preset::Fig2bApSweep => {
            header = vec!["num_aps", "antennas_per_ap", "eer"];
            let total = exp.scenario.num_aps * exp.scenario.antennas_per_ap;
            let (splits, skip) = ap_sweep_splits(total, 12);
            skipped = skip;
            for &m in &skipped {
                eprintln!(
                    "ap sweep: skipping M = {m} ({total} antennas do not split equally)"
                );
            }
            for (m, k) in splits {
                let cfg = ScenarioConfig {
                    num_aps: m,
                    antennas_per_ap: k,
                    ap_positions: None,
                    ..exp.scenario.clone()
                };
                let opts = CampaignOptions {
                    trials: exp.trials,
                    max_iters: exp.max_iters,
                    ..Default::default()
                };
                let trials = run_trials(&cfg, &params, &opts)?;
                let curve = equal_error_trials(&trials, &gammas)?;
                check_curve_monotone(&curve)?;
                csv_rows.push(vec![m.to_string(), k.to_string(), fmt(curve.eer)]);
                eer_summary.push(serde_json::json!({
                    "num_aps": m, "antennas_per_ap": k, "eer": curve.eer,
                }));
            }
        }
        Preset::Fig3aDeviceSweep | Preset::Fig3bSeqlenSweep => {
            let device_sweep = exp.preset == Preset::Fig3aDeviceSweep;
            header = if device_sweep {
                vec!["carrier_wavelength", "rayleigh_m", "num_devices", "eer"]
            } else {
                vec!["carrier_wavelength", "rayleigh_m", "signature_len", "eer"]
            };
            for wl in sweep_wavelengths() {
                let rayleigh = rayleigh_distance(exp.scenario.antennas_per_ap, wl);
                rayleigh_list.push(rayleigh);
                let grid: Vec<usize> = if device_sweep {
                    sweep_device_counts()
                } else {
                    sweep_signature_lengths()
                };
                for v in grid {
                    let cfg = ScenarioConfig {
                        carrier_wavelength: wl,
                        num_devices: if device_sweep { v } else { exp.scenario.num_devices },
                        signature_len: if device_sweep { exp.scenario.signature_len } else { v },
                        ..exp.scenario.clone()
                    };
                    let opts = CampaignOptions {
                        trials: exp.trials,
                        max_iters: exp.max_iters,
                        ..Default::default()
                    };
                    let trials = run_trials(&cfg, &params, &opts)?;
                    let curve = equal_error_trials(&trials, &gammas)?;
                    check_curve_monotone(&curve)?;
                    csv_rows.push(vec![
                        fmt(wl),
                        fmt(rayleigh),
                        v.to_string(),
                        fmt(curve.eer),
                    ]);
                    eer_summary.push(serde_json::json!({
                        "carrier_wavelength": wl,
                        (if device_sweep { "num_devices" } else { "signature_len" }): v,
                        "eer": curve.eer,
                    }));
                }
            }
        }
        Preset::Custom => {
            header = vec!["gamma", "pm", "pf"];
            let opts = CampaignOptions {
                trials: exp.trials,
                max_iters: exp.max_iters,
                ..Default::default()
            };
            let trials = run_trials(&exp.scenario, &params, &opts)?;
            let curve = equal_error_trials(&trials, &gammas)?;
            check_curve_monotone(&curve)?;
            for p in &curve.points {
                csv_rows.push(vec![fmt(p.gamma), fmt(p.pm), fmt(p.pf)]);
            }
            eer_summary.push(serde_json::json!({
                "eer": curve.eer, "no_crossing": curve.no_crossing,
            }));
        }
    }

    let csv_path = out_dir.join(format!("{}.csv", exp.preset.name()));
    let mut w = csv::Writer::from_writer(std::fs::File::create(&csv_path)?);
    w.write_record(&header)?;
    for row in &csv_rows {
        w.write_record(row)?;
    }
    w.flush()?;

    let manifest = Manifest {
        preset: exp.preset.name(),
        scenario: &exp.scenario,
        trials: exp.trials,
        max_iters: exp.max_iters,
        gamma_points: exp.gamma_points,
        seed: exp.scenario.seed,
        rayleigh_distances_m: rayleigh_list,
        skipped_ap_counts: skipped,
        rows: csv_rows.len(),
        eer_summary,
    };
    let manifest_path = out_dir.join(format!("{}_manifest.json", exp.preset.name()));
    let mut f = std::fs::File::create(&manifest_path)?;
    f.write_all(serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(ExperimentOutput {
        csv_path,
        manifest_path,
    })
}
