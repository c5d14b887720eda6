//! Batch experiments: sweeps of encode, channel and decode trials with
//! aggregated error rates, plus state-evolution overlays.
//!
//! Trials run on a rayon pool whose size comes from the `SCSPARC_WORKERS`
//! environment variable. Seeds are derived from the root seed, the sweep
//! point and the trial index only, so results do not depend on scheduling.

mod config;
mod output;

pub use config::{
    ChannelSection, CodeSection, CouplingSpec, CsSection, ExperimentConfig, ExperimentSection, Sweep, SweepPoint,
};
pub use output::{
    write_cs_csv, write_diagnostics_json, write_results_csv, DIAGNOSTICS_SCHEMA_VERSION, RESULTS_CSV_COLUMNS,
    RESULTS_CSV_HEADER,
};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amp::{AmpDecoder, DecodeConfig, SeMode, SeSource, StopReason};
use crate::channel::{ebn0_convention, ebn0_db, transmit};
use crate::cs_amp::{cs_amp_decode, cs_base_matrix, cs_se_run, BgBayes, CsModel, CsSeSource};
use crate::design::{
    build_design, BlockLayout, DftDesign, Design, Field, OperatorKind, OperatorSpec, Scalar, DEFAULT_DENSE_CAP_BYTES,
};
use crate::error::{Error, Result};
use crate::message::{nmse, section_error_rate, section_errors, MessageVector};
use crate::params::{bits_to_nats, derive_code_params, BaseMatrix, CouplingParams, SparcParams};
use crate::rng::{derive_seed, SeedRole};
use crate::state_evolution::{
    default_t_max, progression_report, run_se, ProgressionReport, SeConfig, SeModel, SeStopRule, SeTrajectory,
};

/// Dense compressed-sensing matrices above this size are not built concurrently.
const SEQUENTIAL_DENSE_BYTES: u128 = 1 << 28;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "SCSPARC_WORKERS";

/// Builds the trial pool; `SCSPARC_WORKERS` unset or `0` means rayon's default.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{WORKERS_ENV} must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Seeds of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub message: u64,
    pub matrix: u64,
    pub noise: u64,
}

impl TrialSeeds {
    pub fn derive(root: u64, point: usize, trial: usize) -> Self {
        let index = ((point as u64) << 32) | trial as u64;
        Self {
            message: derive_seed(root, index, SeedRole::Message),
            matrix: derive_seed(root, index, SeedRole::Matrix),
            noise: derive_seed(root, index, SeedRole::Noise),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seeds: TrialSeeds,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub section_errors: usize,
    pub ser: f64,
    /// NMSE of the final soft estimate.
    pub nmse: f64,
    pub divergence: Option<String>,
    pub clamped: bool,
    /// Per-block NMSE of each iterate, when traces are recorded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmse_per_block: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_trace: Option<Vec<Vec<f64>>>,
}

/// Aggregates of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub point: SweepPoint,
    pub n: usize,
    pub rate_bits: f64,
    pub ebn0_db: f64,
    pub ebn0_convention: String,
    pub trials: usize,
    pub ser_mean: f64,
    pub fer: f64,
    /// Section-error rate times `M / (2 (M - 1))`, the expected fraction of
    /// wrong bits in a uniformly wrong section. A proxy, not a measured BER.
    pub ber_proxy: f64,
    pub nmse_mean: f64,
    pub nmse_std: f64,
    pub iters_mean: f64,
    pub diverged: usize,
    pub operator: OperatorSpec,
    pub se_mode: SeMode,
    pub progression: ProgressionReport,
    /// Offline state-evolution `psi[t][c]`, when it was computed.
    pub se_psi: Option<Vec<Vec<f64>>>,
    /// Mean per-block NMSE over trials, `[t][c]`, when traces are recorded.
    pub nmse_trace: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub record: ResultRecord,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub points: Vec<PointResult>,
    pub cs: Option<CsResult>,
}

impl ExperimentResult {
    pub fn records(&self) -> Vec<ResultRecord> {
        self.points.iter().map(|p| p.record.clone()).collect()
    }
}

/// Code parameters and base matrix of one sweep point.
pub fn code_for_point(cfg: &ExperimentConfig, point: &SweepPoint) -> Result<(SparcParams, BaseMatrix)> {
    let code = cfg
        .code
        .as_ref()
        .ok_or_else(|| Error::Config("missing [code] section".into()))?;
    let coupling = cfg.coupling()?;
    match code.n {
        Some(n) => {
            let base = BaseMatrix::from_coupling(&coupling, point.power)?;
            let params = SparcParams::new(n, code.m, code.l, &base, point.sigma2)?;
            Ok((params, base))
        }
        None => derive_code_params(
            bits_to_nats(point.rate_bits),
            code.m,
            &coupling,
            code.l,
            point.power,
            point.sigma2,
            code.rounding,
        ),
    }
}

/// Closed-form progression predictions in per-dimension units.
pub fn progression_for(params: &SparcParams, coupling: &CouplingParams, field: Field) -> Result<ProgressionReport> {
    let d = field.dims_per_use() as f64;
    progression_report(params.rate / d, params.snr(), coupling, params.m, 1.0)
}

fn se_config(cfg: &ExperimentConfig, point_index: usize, report: &ProgressionReport) -> SeConfig {
    SeConfig {
        samples: cfg.experiment.se_samples,
        seed: derive_seed(cfg.experiment.seed, point_index as u64, SeedRole::StateEvolution),
        stop: SeStopRule::Threshold {
            value: cfg.experiment.se_threshold,
        },
        t_max: cfg.experiment.t_max.unwrap_or_else(|| default_t_max(report)),
        t_bound: report.t_bound,
    }
}

/// Offline state evolution for every sweep point.
pub fn se_for_config(cfg: &ExperimentConfig) -> Result<Vec<(SweepPoint, SeTrajectory)>> {
    let coupling = cfg.coupling()?;
    cfg.points()?
        .into_iter()
        .enumerate()
        .map(|(i, point)| {
            let (params, base) = code_for_point(cfg, &point)?;
            let report = progression_for(&params, &coupling, cfg.field())?;
            let model = SeModel::for_code(&params, &base, cfg.field())?;
            Ok((point, run_se(&model, &se_config(cfg, i, &report))?))
        })
        .collect()
}

/// Progression reports for every sweep point.
pub fn progression_for_config(cfg: &ExperimentConfig) -> Result<Vec<(SweepPoint, ProgressionReport)>> {
    let coupling = cfg.coupling()?;
    cfg.points()?
        .into_iter()
        .map(|point| {
            let (params, _) = code_for_point(cfg, &point)?;
            Ok((point, progression_for(&params, &coupling, cfg.field())?))
        })
        .collect()
}

/// Runs every configured sweep point, and the compressed-sensing experiment
/// when a `[cs]` section is present.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let pool = worker_pool()?;
    pool.install(|| {
        let mut points = Vec::new();
        if cfg.code.is_some() {
            for (i, point) in cfg.points()?.into_iter().enumerate() {
                points.push(match cfg.field() {
                    Field::Real => run_point::<f64>(cfg, i, point)?,
                    Field::Complex => run_point::<Complex64>(cfg, i, point)?,
                });
            }
        }
        let cs = match &cfg.cs {
            Some(_) => Some(run_cs_experiment(cfg)?),
            None => None,
        };
        Ok(ExperimentResult {
            config: cfg.clone(),
            points,
            cs,
        })
    })
}

fn run_point<T: Scalar>(cfg: &ExperimentConfig, index: usize, point: SweepPoint) -> Result<PointResult>
where
    DftDesign<T>: Design<T>,
{
    let exp = &cfg.experiment;
    let coupling = cfg.coupling()?;
    let (params, base) = code_for_point(cfg, &point)?;
    let report = progression_for(&params, &coupling, T::FIELD)?;
    let se_cfg = se_config(cfg, index, &report);
    let traj = match exp.se_mode {
        SeMode::Offline => Some(run_se(&SeModel::for_code(&params, &base, T::FIELD)?, &se_cfg)?),
        _ => None,
    };
    let decode_cfg = DecodeConfig {
        t_max: se_cfg.t_max,
        early_stop: exp.early_stop,
    };
    let cap = exp.dense_cap_bytes.map_or(DEFAULT_DENSE_CAP_BYTES, u128::from);
    let layout = BlockLayout::sparc(&params, &base)?;

    let trials: Vec<TrialRecord> = (0..exp.trials)
        .into_par_iter()
        .map(|trial| -> Result<TrialRecord> {
            let seeds = TrialSeeds::derive(exp.seed, index, trial);
            let design = build_design::<T>(exp.operator, layout.clone(), seeds.matrix, cap)?;
            let truth = MessageVector::random(params.m, params.l, seeds.message);
            let x = design.apply_real(&truth.to_dense())?;
            let y = transmit(&x, params.sigma2, seeds.noise);
            let decoder = AmpDecoder::new(design.as_ref(), &params, &base)?;
            let source = match (&traj, exp.se_mode) {
                (Some(t), _) => SeSource::Offline(t),
                (None, SeMode::OnlineKnownSigma) => SeSource::OnlineKnownSigma,
                (None, _) => SeSource::Online,
            };
            let out = decoder.decode(&y, &decode_cfg, source, Some(&truth))?;
            let diag = out.diagnostics;
            Ok(TrialRecord {
                trial,
                seeds,
                iterations: diag.iterations,
                stop_reason: diag.stop_reason.unwrap_or(StopReason::MaxIterations),
                section_errors: section_errors(&out.message, &truth),
                ser: section_error_rate(&out.message, &truth)?,
                nmse: nmse(out.estimate.values(), &truth, params.cols)?.overall,
                divergence: diag.divergence,
                clamped: diag.clamped,
                nmse_per_block: if exp.record_trace { diag.nmse_per_block } else { None },
                phi_trace: exp.record_trace.then_some(diag.phi_trace),
            })
        })
        .collect::<Result<_>>()?;

    let record = aggregate(
        point,
        &params,
        T::FIELD,
        design_spec(exp.operator, T::FIELD, &layout, exp.seed),
        exp.se_mode,
        report,
        traj.as_ref().map(|t| t.psi.clone()),
        &trials,
    )?;
    Ok(PointResult { record, trials })
}

fn design_spec(kind: OperatorKind, field: Field, layout: &BlockLayout, root: u64) -> OperatorSpec {
    OperatorSpec {
        kind,
        field,
        seed: root,
        n: layout.n(),
        cols: layout.cols(),
        row_blocks: layout.row_blocks(),
        col_blocks: layout.col_blocks(),
    }
}

/// Averages per-iteration traces of unequal length; a trial that stopped
/// early keeps its final value.
pub fn mean_trace(traces: &[&Vec<Vec<f64>>]) -> Option<Vec<Vec<f64>>> {
    let len = traces.iter().map(|t| t.len()).max()?;
    let width = traces[0].first()?.len();
    let mut out = vec![vec![0.0; width]; len];
    for tr in traces {
        for (t, row) in out.iter_mut().enumerate() {
            let src = &tr[t.min(tr.len() - 1)];
            for (o, v) in row.iter_mut().zip(src) {
                *o += v;
            }
        }
    }
    let k = traces.len() as f64;
    out.iter_mut().flatten().for_each(|v| *v /= k);
    Some(out)
}

/// Aggregates trial records into one result record.
#[allow(clippy::too_many_arguments)]
pub fn aggregate(
    point: SweepPoint,
    params: &SparcParams,
    field: Field,
    operator: OperatorSpec,
    se_mode: SeMode,
    progression: ProgressionReport,
    se_psi: Option<Vec<Vec<f64>>>,
    trials: &[TrialRecord],
) -> Result<ResultRecord> {
    if trials.is_empty() {
        return Err(Error::InvalidArgument("cannot aggregate zero trials".into()));
    }
    let k = trials.len() as f64;
    let ser_mean = trials.iter().map(|t| t.ser).sum::<f64>() / k;
    let fer = trials.iter().filter(|t| t.section_errors > 0).count() as f64 / k;
    let nmse_mean = trials.iter().map(|t| t.nmse).sum::<f64>() / k;
    let nmse_std = if trials.len() > 1 {
        (trials.iter().map(|t| (t.nmse - nmse_mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    let m = params.m as f64;
    let traces: Vec<&Vec<Vec<f64>>> = trials.iter().filter_map(|t| t.nmse_per_block.as_ref()).collect();
    Ok(ResultRecord {
        point,
        n: params.n,
        rate_bits: params.rate_bits(),
        ebn0_db: ebn0_db(params.rate, params.snr(), field)?,
        ebn0_convention: ebn0_convention(field).to_string(),
        trials: trials.len(),
        ser_mean,
        fer,
        ber_proxy: ser_mean * m / (2.0 * (m - 1.0)),
        nmse_mean,
        nmse_std,
        iters_mean: trials.iter().map(|t| t.iterations as f64).sum::<f64>() / k,
        diverged: trials.iter().filter(|t| t.divergence.is_some()).count(),
        operator,
        se_mode,
        progression,
        se_psi,
        nmse_trace: if traces.len() == trials.len() { mean_trace(&traces) } else { None },
    })
}

/// Absolute deviation between empirical per-block NMSE and SE predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeComparison {
    /// `|nmse[t][c] - psi[t][c]|`.
    pub deviation: Vec<Vec<f64>>,
    pub max: f64,
    pub mean: f64,
}

/// Compares an empirical `[t][c]` NMSE table with an SE trajectory. Rows
/// beyond the end of the trajectory compare against its final value.
pub fn compare_to_se(empirical: &[Vec<f64>], traj: &SeTrajectory) -> Result<SeComparison> {
    let cols = traj.psi[0].len();
    if empirical.is_empty() {
        return Err(Error::ShapeMismatch("empty NMSE table".into()));
    }
    if let Some(row) = empirical.iter().find(|r| r.len() != cols) {
        return Err(Error::ShapeMismatch(format!(
            "NMSE rows have {} blocks, the trajectory has {cols}",
            row.len()
        )));
    }
    let deviation: Vec<Vec<f64>> = empirical
        .iter()
        .enumerate()
        .map(|(t, row)| row.iter().zip(traj.psi_at(t)).map(|(e, p)| (e - p).abs()).collect())
        .collect();
    let flat = deviation.iter().flatten();
    let count = (deviation.len() * cols) as f64;
    Ok(SeComparison {
        max: flat.clone().fold(0.0, |a, b| a.max(*b)),
        mean: flat.sum::<f64>() / count,
        deviation,
    })
}

/// Mean empirical and predicted `||beta^t - beta||^2 / p` of the
/// compressed-sensing experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsResult {
    pub n: usize,
    pub p: usize,
    pub trials: usize,
    pub mse_empirical: Vec<f64>,
    pub mse_se: Vec<f64>,
    pub diverged: usize,
}

/// Measurement count for a sampling ratio: `delta p` rounded to the nearest
/// multiple of the base-matrix row count.
pub fn cs_measurements(p: usize, delta: f64, rows: usize) -> usize {
    let blocks = (delta * p as f64 / rows as f64).round().max(1.0) as usize;
    blocks * rows
}

pub fn cs_model_for(cs: &CsSection) -> Result<CsModel> {
    let coupling = CouplingParams::new(cs.w.omega, cs.w.lambda, cs.w.rho)?;
    let base = cs_base_matrix(&coupling)?;
    let n = cs_measurements(cs.p, cs.delta, base.rows());
    CsModel::new(cs.p, n, cs.prior, cs.sigma2, base)
}

/// Runs the `[cs]` experiment with the Bayes denoiser and offline SE.
pub fn run_cs_experiment(cfg: &ExperimentConfig) -> Result<CsResult> {
    let cs = cfg
        .cs
        .as_ref()
        .ok_or_else(|| Error::Config("missing [cs] section".into()))?;
    let exp = &cfg.experiment;
    let model = cs_model_for(cs)?;
    let denoiser = BgBayes::from_prior(&cs.prior);
    let se = cs_se_run(&model, &denoiser, cs.t_max)?;
    let layout = model.layout()?;
    let cap = exp.dense_cap_bytes.map_or(DEFAULT_DENSE_CAP_BYTES, u128::from);
    let kind = cs.operator.unwrap_or(OperatorKind::Dense);
    let source = match exp.se_mode {
        SeMode::Offline => CsSeSource::Offline(&se),
        _ => CsSeSource::Online,
    };
    let run_trial = |trial: usize| -> Result<(Vec<f64>, bool)> {
        let seeds = TrialSeeds::derive(exp.seed, usize::MAX >> 32, trial);
        let design = build_design::<f64>(kind, layout.clone(), seeds.matrix, cap)?;
        let beta = cs.prior.sample(model.p, seeds.message);
        let y = transmit(&design.apply(&beta)?, model.sigma2.max(f64::MIN_POSITIVE), seeds.noise);
        let out = cs_amp_decode(design.as_ref(), &y, &model, &denoiser, source, cs.t_max, Some(&beta))?;
        Ok((out.mse_trace, out.diverged))
    };
    // Large dense matrices are built one at a time; their products are
    // parallel internally.
    let dense_bytes = (model.n as u128) * (model.p as u128) * 8;
    let runs: Vec<(Vec<f64>, bool)> = if kind == OperatorKind::Dense && dense_bytes > SEQUENTIAL_DENSE_BYTES {
        (0..exp.trials).map(run_trial).collect::<Result<_>>()?
    } else {
        (0..exp.trials).into_par_iter().map(run_trial).collect::<Result<_>>()?
    };
    let len = cs.t_max + 1;
    let mut mean = vec![0.0; len];
    for (trace, _) in &runs {
        for (t, m) in mean.iter_mut().enumerate() {
            *m += trace[t.min(trace.len() - 1)];
        }
    }
    mean.iter_mut().for_each(|m| *m /= exp.trials as f64);
    Ok(CsResult {
        n: model.n,
        p: model.p,
        trials: exp.trials,
        mse_empirical: mean,
        mse_se: (0..len).map(|t| se.mse(t)).collect(),
        diverged: runs.iter().filter(|r| r.1).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            r#"
            [code]
            rate_bits = 0.5
            M = 16
            omega = 2
            Lambda = 4
            L = 64
            snr_db = 10.0

            [experiment]
            trials = 3
            seed = 7
            operator = "dense"
            se_samples = 500
            "#,
        )
        .unwrap()
    }

    #[test]
    fn config_precedence_and_points() {
        let mut cfg = small_config();
        let p = cfg.points().unwrap();
        assert_eq!(p.len(), 1);
        assert!((p[0].sigma2 - 0.1).abs() < 1e-12);
        cfg.channel.sigma2 = Some(0.5);
        assert_eq!(cfg.points().unwrap()[0].sigma2, 0.5);
        cfg.experiment.sweep = Some(Sweep {
            snr_db: Some(vec![0.0, 3.0]),
            rate_bits: None,
        });
        let p = cfg.points().unwrap();
        assert_eq!(p.len(), 2);
        assert!((p[0].sigma2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_rejects_bad_input() {
        assert!(ExperimentConfig::from_toml_str("[experiment]\ntrials = 1\n").is_err());
        let text = "[code]\nrate_bits = 1\nM = 4\nomega = 2\nLambda = 4\nL = 8\nsnr_db = 5\nbogus = 1\n";
        assert!(ExperimentConfig::from_toml_str(text).is_err());
        let text = "[code]\nrate_bits = 1\nM = 4\nomega = 2\nLambda = 4\nL = 8\n";
        assert!(ExperimentConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn aggregates_match_trials() {
        let res = run_experiment(&small_config()).unwrap();
        let pt = &res.points[0];
        let k = pt.trials.len() as f64;
        let ser: f64 = pt.trials.iter().map(|t| t.ser).sum::<f64>() / k;
        assert_eq!(pt.record.ser_mean, ser);
        assert_eq!(pt.record.trials, 3);
        assert!(pt.record.fer >= 0.0 && pt.record.fer <= 1.0);
    }

    #[test]
    fn comparison_shapes() {
        let cfg = small_config();
        let (_, traj) = se_for_config(&cfg).unwrap().remove(0);
        let zero = compare_to_se(&traj.psi, &traj).unwrap();
        assert_eq!(zero.max, 0.0);
        assert!(compare_to_se(&[vec![0.0; 3]], &traj).is_err());
    }

    #[test]
    fn mean_trace_extends_short_runs() {
        let a = vec![vec![1.0], vec![0.0]];
        let b = vec![vec![1.0], vec![0.5], vec![0.25]];
        let m = mean_trace(&[&a, &b]).unwrap();
        assert_eq!(m, vec![vec![1.0], vec![0.25], vec![0.125]]);
    }
}
