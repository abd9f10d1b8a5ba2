//! Seeded multi-trial experiment harness.
//!
//! Three experiment families, each sweeping the noise scale `a` (and the
//! coupling `b` for the cycle family) over independent trials:
//!
//! - `fdr_sweep`: pairwise dependence tests on chain data with
//!   false-discovery-rate control, scored against the true chain edges;
//! - `cl_fit_sweep`: dependence-tree selection on chain data followed by a
//!   model-fit test of the selected tree;
//! - `cycle_fit_sweep`: the same pipeline on cycle data, where no tree can
//!   be correct.
//!
//! Every trial derives its generator seed from (master seed, experiment,
//! sweep index, trial index) only, so all estimators see identical data and
//! identical bootstrap resamples. Outputs are `trials.csv`, `summary.csv`,
//! and `manifest.json` in the output directory; for a fixed configuration
//! the two CSV files are bitwise reproducible (wall-clock timings live only
//! in the manifest).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::ensemble::{ensemble_estimates_multi, EnsembleConfig, EstimatorVariant, WeightMode};
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::inference::{model_fit_test, pairwise_edge_test, EstimateResult};
use crate::kde::DensityFloor;
use crate::rng::RngStream;
use crate::structure::{chow_liu, DependenceDirection, MiMatrix, RatioDecomposition};
use crate::synthetic::{gen_cycle, CycleSpec};

pub const TRUE_CHAIN_EDGES: [(usize, usize); 2] = [(0, 1), (1, 2)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FdrSweep,
    ClFitSweep,
    CycleFitSweep,
}

impl ExperimentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::FdrSweep => "fdr_sweep",
            ExperimentKind::ClFitSweep => "cl_fit_sweep",
            ExperimentKind::CycleFitSweep => "cycle_fit_sweep",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "fdr_sweep" => Ok(ExperimentKind::FdrSweep),
            "cl_fit_sweep" => Ok(ExperimentKind::ClFitSweep),
            "cycle_fit_sweep" => Ok(ExperimentKind::CycleFitSweep),
            other => Err(Error::InvalidConfig(format!("unknown experiment {other:?}"))),
        }
    }

    fn seed_tag(&self) -> u64 {
        match self {
            ExperimentKind::FdrSweep => 0xF1,
            ExperimentKind::ClFitSweep => 0xF2,
            ExperimentKind::CycleFitSweep => 0xF3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    Plugin,
    Odin1,
    Odin2,
}

impl EstimatorChoice {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorChoice::Plugin => "plugin",
            EstimatorChoice::Odin1 => "odin1",
            EstimatorChoice::Odin2 => "odin2",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "plugin" => Ok(EstimatorChoice::Plugin),
            "odin1" => Ok(EstimatorChoice::Odin1),
            "odin2" => Ok(EstimatorChoice::Odin2),
            other => Err(Error::InvalidConfig(format!("unknown estimator {other:?}"))),
        }
    }
}

fn default_n_samples() -> usize {
    500
}
fn default_gamma() -> f64 {
    0.1
}
fn default_functional() -> Functional {
    Functional::Renyi { alpha: 0.5 }
}
fn default_l_count() -> usize {
    50
}
fn default_l_min() -> f64 {
    1.0
}
fn default_l_max() -> f64 {
    3.0
}
fn default_weight_mode() -> WeightMode {
    WeightMode::Relaxed
}
fn default_bootstrap() -> usize {
    200
}
fn default_floor() -> f64 {
    1e-12
}
fn default_floor_hits() -> Option<f64> {
    Some(1.0)
}
fn default_plugin_l() -> f64 {
    2.0
}
fn default_odin2_delta() -> f64 {
    1.0
}
fn default_studentize() -> bool {
    true
}
fn default_b_values() -> Vec<f64> {
    vec![0.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n_trials: usize,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    pub a_values: Vec<f64>,
    /// Coupling sweep; used by the cycle family only.
    #[serde(default = "default_b_values")]
    pub b_values: Vec<f64>,
    pub estimators: Vec<EstimatorChoice>,
    #[serde(default = "default_gamma")]
    pub gamma_level: f64,
    #[serde(default = "default_functional")]
    pub functional: Functional,
    #[serde(default = "default_l_count")]
    pub l_count: usize,
    #[serde(default = "default_l_min")]
    pub l_min: f64,
    #[serde(default = "default_l_max")]
    pub l_max: f64,
    #[serde(default = "default_weight_mode")]
    pub weight_mode: WeightMode,
    /// Relaxed-mode bound; `None` resolves to 1/sqrt(N).
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_b: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_studentize")]
    pub studentize: bool,
    /// Generator noise standard deviation; `None` means sqrt(0.5).
    #[serde(default)]
    pub noise_std: Option<f64>,
    #[serde(default = "default_floor")]
    pub density_floor: f64,
    /// Resolution-scaled floor: clamp each KDE factor at
    /// `floor_hits / (M h^k)` in addition to the absolute floor. `None`
    /// disables the resolution clamp.
    #[serde(default = "default_floor_hits")]
    pub floor_hits: Option<f64>,
    /// Bandwidth parameter at which the plugin baseline evaluates its
    /// single member (midpoint of the default ladder).
    #[serde(default = "default_plugin_l")]
    pub plugin_l: f64,
    #[serde(default = "default_odin2_delta")]
    pub odin2_delta: f64,
    #[serde(default)]
    pub allow_failures: bool,
}

impl ExperimentConfig {
    /// Baseline configuration for an experiment family.
    pub fn default_for(experiment: ExperimentKind, output_dir: impl Into<PathBuf>) -> Self {
        let (n_trials, a_values, estimators) = match experiment {
            ExperimentKind::FdrSweep => (
                100,
                vec![0.1, 0.3, 0.5, 0.7, 0.9],
                vec![EstimatorChoice::Odin1, EstimatorChoice::Plugin],
            ),
            ExperimentKind::ClFitSweep => (
                90,
                vec![0.05, 0.1, 0.2, 0.4, 0.6],
                vec![
                    EstimatorChoice::Plugin,
                    EstimatorChoice::Odin1,
                    EstimatorChoice::Odin2,
                ],
            ),
            ExperimentKind::CycleFitSweep => (
                100,
                vec![0.05, 0.1, 0.2, 0.4],
                vec![
                    EstimatorChoice::Plugin,
                    EstimatorChoice::Odin1,
                    EstimatorChoice::Odin2,
                ],
            ),
        };
        ExperimentConfig {
            experiment,
            n_trials,
            n_samples: default_n_samples(),
            a_values,
            b_values: default_b_values(),
            estimators,
            gamma_level: default_gamma(),
            functional: default_functional(),
            l_count: default_l_count(),
            l_min: default_l_min(),
            l_max: default_l_max(),
            weight_mode: default_weight_mode(),
            tau: None,
            bootstrap_b: default_bootstrap(),
            master_seed: 20_17,
            output_dir: output_dir.into(),
            studentize: default_studentize(),
            noise_std: None,
            density_floor: default_floor(),
            floor_hits: default_floor_hits(),
            plugin_l: default_plugin_l(),
            odin2_delta: default_odin2_delta(),
            allow_failures: false,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::FileRead {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("cannot parse {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidConfig("n_trials must be at least 1".into()));
        }
        if self.n_samples < 2 {
            return Err(Error::InvalidConfig("n_samples must be at least 2".into()));
        }
        if self.a_values.is_empty() {
            return Err(Error::InvalidConfig("sweep list is empty".into()));
        }
        if matches!(self.experiment, ExperimentKind::CycleFitSweep) && self.b_values.is_empty() {
            return Err(Error::InvalidConfig("coupling sweep list is empty".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators selected".into()));
        }
        for (idx, e) in self.estimators.iter().enumerate() {
            if self.estimators[..idx].contains(e) {
                return Err(Error::InvalidConfig(format!(
                    "estimator {} listed twice",
                    e.label()
                )));
            }
        }
        if matches!(self.experiment, ExperimentKind::FdrSweep)
            && self.estimators.contains(&EstimatorChoice::Odin2)
        {
            return Err(Error::InvalidConfig(
                "odin2 has no pairwise form; it cannot run the edge-test sweep".into(),
            ));
        }
        if !(self.gamma_level > 0.0 && self.gamma_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "significance level must lie in (0, 1), got {}",
                self.gamma_level
            )));
        }
        if self.bootstrap_b < 2 {
            return Err(Error::InvalidConfig(
                "need at least 2 bootstrap replicates".into(),
            ));
        }
        if !(self.plugin_l > 0.0) {
            return Err(Error::InvalidConfig("plugin_l must be positive".into()));
        }
        EnsembleConfig::l_range(self.l_min, self.l_max, self.l_count)?;
        let floor = DensityFloor::new(self.density_floor)?;
        if let Some(hits) = self.floor_hits {
            floor.with_resolution_hits(hits)?;
        }
        if let Functional::Renyi { alpha } = self.functional {
            Functional::renyi(alpha)?;
        }
        Ok(())
    }

    fn floor(&self) -> DensityFloor {
        let floor = DensityFloor::new(self.density_floor).expect("validated");
        match self.floor_hits {
            Some(hits) => floor.with_resolution_hits(hits).expect("validated"),
            None => floor,
        }
    }

    fn l_set(&self) -> Vec<f64> {
        EnsembleConfig::l_range(self.l_min, self.l_max, self.l_count).expect("validated")
    }

    /// Sweep points in deterministic order.
    pub fn sweep_points(&self) -> Vec<(f64, f64)> {
        match self.experiment {
            ExperimentKind::CycleFitSweep => {
                let mut pts = Vec::new();
                for &a in &self.a_values {
                    for &b in &self.b_values {
                        pts.push((a, b));
                    }
                }
                pts
            }
            _ => self.a_values.iter().map(|&a| (a, 0.0)).collect(),
        }
    }

    /// Ensemble configuration for one estimator at one pipeline stage.
    pub fn estimator_config(&self, choice: EstimatorChoice, stage: Stage) -> EnsembleConfig {
        let n = self.n_samples as f64;
        let d = 3.0;
        match choice {
            EstimatorChoice::Plugin => {
                let h = match stage {
                    Stage::Pairwise => self.plugin_l * n.powf(-0.25),
                    Stage::ModelFit => self.plugin_l * n.powf(-1.0 / (2.0 * d)),
                };
                EnsembleConfig::plugin(h)
            }
            EstimatorChoice::Odin1 => {
                let variant = match stage {
                    Stage::Pairwise => EstimatorVariant::Odin1Pairwise,
                    Stage::ModelFit => EstimatorVariant::odin1_full_for_dim(3),
                };
                EnsembleConfig::new(variant)
                    .with_l_set(self.l_set())
                    .with_weight_mode(self.weight_mode, self.tau)
            }
            EstimatorChoice::Odin2 => {
                // No pairwise form: the tree-building stage falls back to the
                // pairwise ensemble, the model-fit stage uses the finer basis.
                let variant = match stage {
                    Stage::Pairwise => EstimatorVariant::Odin1Pairwise,
                    Stage::ModelFit => EstimatorVariant::Odin2Full {
                        delta: self.odin2_delta,
                    },
                };
                EnsembleConfig::new(variant)
                    .with_l_set(self.l_set())
                    .with_weight_mode(self.weight_mode, self.tau)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pairwise,
    ModelFit,
}

/// Per-pair point estimate (and p-value where the pipeline tests pairs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOutcome {
    pub i: usize,
    pub k: usize,
    pub estimate: f64,
    pub p_value: Option<f64>,
}

/// One trial's results. Wall time is diagnostic only and never serialized
/// into `trials.csv`, which must be bitwise reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub estimator: EstimatorChoice,
    pub a: f64,
    pub b: f64,
    pub trial: usize,
    pub pairs: Vec<PairOutcome>,
    pub rejected_edges: Vec<(usize, usize)>,
    pub fdr: Option<f64>,
    pub cl_tree: Option<Vec<(usize, usize)>>,
    pub fit: Option<EstimateResult>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimator: String,
    pub a: f64,
    pub b: f64,
    pub n_trials: usize,
    pub mean_fdr: Option<f64>,
    pub mean_p: Option<f64>,
    pub p20: Option<f64>,
    pub p80: Option<f64>,
    pub mean_estimate: Option<f64>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub n_failed: usize,
}

/// Builds the global worker pool, honoring the MIST_THREADS bound. Safe to
/// call more than once.
pub fn init_thread_pool_from_env() {
    if let Ok(v) = std::env::var("MIST_THREADS") {
        if let Ok(threads) = v.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn generate_trial_data(cfg: &ExperimentConfig, a: f64, b: f64, trial_seed: u64) -> Result<Dataset> {
    let spec = CycleSpec {
        n: cfg.n_samples,
        a,
        b: if matches!(cfg.experiment, ExperimentKind::CycleFitSweep) {
            b
        } else {
            0.0
        },
        seed: trial_seed,
        noise_std: cfg.noise_std,
    };
    let data = gen_cycle(&spec)?;
    if cfg.studentize {
        data.studentize()
    } else {
        Ok(data)
    }
}

fn run_single_trial(
    cfg: &ExperimentConfig,
    est: EstimatorChoice,
    sweep_idx: usize,
    a: f64,
    b: f64,
    trial: usize,
) -> Result<TrialRecord> {
    let start = Instant::now();
    let trial_seed = RngStream::derive(
        cfg.master_seed,
        &[cfg.experiment.seed_tag(), sweep_idx as u64, trial as u64],
    )
    .stream_id();
    let data = generate_trial_data(cfg, a, b, trial_seed)?;
    let boot_stream = RngStream::new(trial_seed, 1000);
    let floor = cfg.floor();
    let f = &cfg.functional;

    let mut record = TrialRecord {
        estimator: est,
        a,
        b,
        trial,
        pairs: Vec::new(),
        rejected_edges: Vec::new(),
        fdr: None,
        cl_tree: None,
        fit: None,
        wall_ms: 0.0,
    };

    match cfg.experiment {
        ExperimentKind::FdrSweep => {
            let pair_cfg = cfg.estimator_config(est, Stage::Pairwise);
            let report = pairwise_edge_test(
                &data,
                f,
                &pair_cfg,
                cfg.gamma_level,
                cfg.bootstrap_b,
                boot_stream,
                floor,
            )?;
            record.pairs = report
                .pairs
                .iter()
                .map(|p| PairOutcome {
                    i: p.i,
                    k: p.k,
                    estimate: p.result.estimate,
                    p_value: Some(p.result.p_value),
                })
                .collect();
            record.rejected_edges = report.rejected_edges();
            let declared = record.rejected_edges.len();
            let false_edges = record
                .rejected_edges
                .iter()
                .filter(|e| !TRUE_CHAIN_EDGES.contains(e))
                .count();
            record.fdr = Some(false_edges as f64 / declared.max(1) as f64);
        }
        ExperimentKind::ClFitSweep | ExperimentKind::CycleFitSweep => {
            let pair_cfg = cfg.estimator_config(est, Stage::Pairwise);
            let d = data.dim();
            let mut targets = Vec::new();
            let mut pairs = Vec::new();
            for i in 0..d {
                for k in (i + 1)..d {
                    targets.push(RatioDecomposition::pairwise(i, k, d)?);
                    pairs.push((i, k));
                }
            }
            let refs: Vec<&RatioDecomposition> = targets.iter().collect();
            let estimates = ensemble_estimates_multi(&data, &refs, f, &pair_cfg, floor)?;
            let mut mi = MiMatrix::new(d, *f)?;
            for ((i, k), est_val) in pairs.iter().zip(&estimates) {
                mi.set(*i, *k, est_val.estimate);
                record.pairs.push(PairOutcome {
                    i: *i,
                    k: *k,
                    estimate: est_val.estimate,
                    p_value: None,
                });
            }
            let tree = chow_liu(&mi, DependenceDirection::for_functional(f))?;
            record.cl_tree = Some(tree.edges().to_vec());
            let fit_cfg = cfg.estimator_config(est, Stage::ModelFit);
            record.fit = Some(model_fit_test(
                &data,
                &tree,
                f,
                &fit_cfg,
                cfg.bootstrap_b,
                boot_stream,
                floor,
            )?);
        }
    }
    record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(record)
}

fn edges_to_string(edges: &[(usize, usize)]) -> String {
    edges
        .iter()
        .map(|&(i, k)| format!("{}-{}", i + 1, k + 1))
        .collect::<Vec<_>>()
        .join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_trials_csv(path: &Path, kind: ExperimentKind, records: &[TrialRecord]) -> Result<()> {
    let mut out = String::from(
        "experiment,estimator,a,b,trial,est_12,p_12,est_13,p_13,est_23,p_23,\
         rejected_edges,fdr,cl_tree,fit_estimate,fit_boot_mean,fit_boot_var,fit_p_value\n",
    );
    for r in records {
        let mut pair_cells = vec![String::new(); 6];
        for p in &r.pairs {
            let slot = match (p.i, p.k) {
                (0, 1) => 0,
                (0, 2) => 1,
                (1, 2) => 2,
                _ => continue,
            };
            pair_cells[slot * 2] = p.estimate.to_string();
            pair_cells[slot * 2 + 1] = p.p_value.map(|v| v.to_string()).unwrap_or_default();
        }
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            kind.label(),
            r.estimator.label(),
            r.a,
            r.b,
            r.trial,
            pair_cells[0],
            pair_cells[1],
            pair_cells[2],
            pair_cells[3],
            pair_cells[4],
            pair_cells[5],
            edges_to_string(&r.rejected_edges),
            opt(r.fdr),
            r.cl_tree.as_deref().map(edges_to_string).unwrap_or_default(),
            opt(r.fit.map(|f| f.estimate)),
            opt(r.fit.map(|f| f.boot_mean)),
            opt(r.fit.map(|f| f.boot_var)),
            opt(r.fit.map(|f| f.p_value)),
        ));
    }
    std::fs::write(path, out).map_err(|source| Error::FileWrite {
        path: path.to_path_buf(),
        source,
    })
}

/// Linear-interpolation quantile of a sorted slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-(estimator, sweep point) summary statistics, in configuration order.
pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for est in &cfg.estimators {
        for &(a, b) in &cfg.sweep_points() {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.estimator == *est && r.a == a && r.b == b)
                .collect();
            if group.is_empty() {
                continue;
            }
            let n = group.len();
            let mean_of = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
            let fdrs: Vec<f64> = group.iter().filter_map(|r| r.fdr).collect();
            let ps: Vec<f64> = group.iter().filter_map(|r| r.fit.map(|f| f.p_value)).collect();
            let fits: Vec<f64> = group.iter().filter_map(|r| r.fit.map(|f| f.estimate)).collect();
            let (mean_p, p20, p80) = if ps.is_empty() {
                (None, None, None)
            } else {
                let mut sorted = ps.clone();
                sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
                (
                    Some(mean_of(&ps)),
                    Some(quantile(&sorted, 0.2)),
                    Some(quantile(&sorted, 0.8)),
                )
            };
            rows.push(SummaryRow {
                estimator: est.label().to_string(),
                a,
                b,
                n_trials: n,
                mean_fdr: if fdrs.is_empty() { None } else { Some(mean_of(&fdrs)) },
                mean_p,
                p20,
                p80,
                mean_estimate: if fits.is_empty() { None } else { Some(mean_of(&fits)) },
            });
        }
    }
    rows
}

fn write_summary_csv(path: &Path, kind: ExperimentKind, rows: &[SummaryRow]) -> Result<()> {
    let mut out =
        String::from("experiment,estimator,a,b,n_trials,mean_fdr,mean_p,p20,p80,mean_estimate\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            kind.label(),
            r.estimator,
            r.a,
            r.b,
            r.n_trials,
            opt(r.mean_fdr),
            opt(r.mean_p),
            opt(r.p20),
            opt(r.p80),
            opt(r.mean_estimate),
        ));
    }
    std::fs::write(path, out).map_err(|source| Error::FileWrite {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads back a summary file written by [`run_experiment`].
pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::FileRead {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    let bad = |reason: &str| Error::ReportFormat {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    if !header.starts_with("experiment,estimator,a,b,n_trials") {
        return Err(bad("unexpected header"));
    }
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 10 {
            return Err(bad("wrong column count"));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| bad(&format!("bad number {s:?}")))
        };
        let parse_opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f(s).map(Some)
            }
        };
        rows.push(SummaryRow {
            estimator: cells[1].to_string(),
            a: parse_f(cells[2])?,
            b: parse_f(cells[3])?,
            n_trials: cells[4]
                .parse()
                .map_err(|_| bad(&format!("bad count {:?}", cells[4])))?,
            mean_fdr: parse_opt(cells[5])?,
            mean_p: parse_opt(cells[6])?,
            p20: parse_opt(cells[7])?,
            p80: parse_opt(cells[8])?,
            mean_estimate: parse_opt(cells[9])?,
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct Manifest<'a> {
    code_version: &'static str,
    created_unix_ms: u128,
    total_wall_ms: f64,
    n_failed: usize,
    tree_selection: &'static str,
    config: &'a ExperimentConfig,
}

/// Runs the configured experiment and writes `trials.csv`, `summary.csv`,
/// and `manifest.json` into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    init_thread_pool_from_env();
    let start = Instant::now();
    std::fs::create_dir_all(&cfg.output_dir).map_err(|source| Error::FileWrite {
        path: cfg.output_dir.clone(),
        source,
    })?;

    let sweep = cfg.sweep_points();
    let mut jobs = Vec::new();
    for est in &cfg.estimators {
        for (s_idx, &(a, b)) in sweep.iter().enumerate() {
            for trial in 0..cfg.n_trials {
                jobs.push((*est, s_idx, a, b, trial));
            }
        }
    }
    let results: Vec<Result<TrialRecord>> = jobs
        .par_iter()
        .map(|&(est, s_idx, a, b, trial)| run_single_trial(cfg, est, s_idx, a, b, trial))
        .collect();

    let mut records = Vec::with_capacity(results.len());
    let mut n_failed = 0usize;
    for ((est, _, a, b, trial), result) in jobs.iter().zip(results) {
        match result {
            Ok(r) => records.push(r),
            Err(e) => {
                n_failed += 1;
                eprintln!(
                    "trial failed: estimator={} a={a} b={b} trial={trial}: {e}",
                    est.label()
                );
            }
        }
    }

    let summary = summarize(cfg, &records);
    write_trials_csv(&cfg.output_dir.join("trials.csv"), cfg.experiment, &records)?;
    write_summary_csv(&cfg.output_dir.join("summary.csv"), cfg.experiment, &summary)?;
    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION"),
        created_unix_ms: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0),
        total_wall_ms: start.elapsed().as_secs_f64() * 1e3,
        n_failed,
        tree_selection:
            "maximum spanning tree on dependence scores; renyi integrals enter negated \
             (order-equivalent to the 1 - G dependence weight)",
        config: cfg,
    };
    let manifest_path = cfg.output_dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serialization"),
    )
    .map_err(|source| Error::FileWrite {
        path: manifest_path,
        source,
    })?;

    if n_failed > 0 && !cfg.allow_failures {
        return Err(Error::FailedTrials { count: n_failed });
    }
    Ok(RunOutcome {
        output_dir: cfg.output_dir.clone(),
        trials: records,
        summary,
        n_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(kind: ExperimentKind, dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default_for(kind, dir);
        cfg.n_trials = 2;
        cfg.n_samples = 80;
        cfg.a_values = vec![0.1];
        cfg.b_values = vec![0.5];
        cfg.l_count = 10;
        cfg.bootstrap_b = 20;
        cfg.estimators = match kind {
            ExperimentKind::FdrSweep => vec![EstimatorChoice::Odin1, EstimatorChoice::Plugin],
            _ => vec![EstimatorChoice::Odin1],
        };
        cfg
    }

    #[test]
    fn zero_trials_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(ExperimentKind::ClFitSweep, dir.path());
        cfg.n_trials = 0;
        assert!(matches!(run_experiment(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn odin2_is_rejected_for_the_edge_sweep() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(ExperimentKind::FdrSweep, dir.path());
        cfg.estimators = vec![EstimatorChoice::Odin2];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fdr_sweep_rows_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(ExperimentKind::FdrSweep, dir.path());
        cfg.n_trials = 1;
        cfg.a_values = vec![0.01];
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.trials.len(), 2); // one per estimator
        for r in &out.trials {
            let fdr = r.fdr.unwrap();
            assert!(
                fdr == 0.0 || (fdr - 1.0 / 3.0).abs() < 1e-15,
                "fdr {fdr} outside {{0, 1/3}}"
            );
        }
        assert!(dir.path().join("trials.csv").exists());
        assert!(dir.path().join("summary.csv").exists());
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn reruns_are_bitwise_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut cfg_a = tiny_config(ExperimentKind::ClFitSweep, dir_a.path());
        cfg_a.n_samples = 60;
        cfg_a.bootstrap_b = 10;
        let mut cfg_b = cfg_a.clone();
        cfg_b.output_dir = dir_b.path().to_path_buf();
        run_experiment(&cfg_a).unwrap();
        run_experiment(&cfg_b).unwrap();
        let a = std::fs::read(dir_a.path().join("trials.csv")).unwrap();
        let b = std::fs::read(dir_b.path().join("trials.csv")).unwrap();
        assert_eq!(a, b);
        let a = std::fs::read(dir_a.path().join("summary.csv")).unwrap();
        let b = std::fs::read(dir_b.path().join("summary.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn row_count_matches_job_grid() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(ExperimentKind::CycleFitSweep, dir.path());
        cfg.a_values = vec![0.1, 0.2];
        cfg.b_values = vec![0.5];
        cfg.n_trials = 2;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.trials.len(), 1 * 2 * 2);
        let text = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + out.trials.len());
    }

    #[test]
    fn summary_recomputes_from_trials() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(ExperimentKind::ClFitSweep, dir.path());
        let out = run_experiment(&cfg).unwrap();
        let recomputed = summarize(&cfg, &out.trials);
        assert_eq!(recomputed.len(), out.summary.len());
        for (a, b) in recomputed.iter().zip(&out.summary) {
            assert!((a.mean_p.unwrap() - b.mean_p.unwrap()).abs() < 1e-12);
            assert!((a.p20.unwrap() - b.p20.unwrap()).abs() < 1e-12);
            assert!((a.p80.unwrap() - b.p80.unwrap()).abs() < 1e-12);
        }
        let from_disk = read_summary_csv(dir.path().join("summary.csv")).unwrap();
        for (mem, disk) in out.summary.iter().zip(&from_disk) {
            assert_eq!(mem.estimator, disk.estimator);
            assert!((mem.mean_p.unwrap() - disk.mean_p.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_interpolates_linearly() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), 0.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(quantile(&xs, 0.5), 2.0);
        assert!((quantile(&xs, 0.2) - 0.8).abs() < 1e-12);
        assert!((quantile(&xs, 0.8) - 3.2).abs() < 1e-12);
    }
}
