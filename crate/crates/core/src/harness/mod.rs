//! Monte Carlo experiments: channel draws, per-trial transceiver runs
//! against a 64-bit reference, and aggregation into rates and error
//! statistics.

mod config;
mod output;
pub mod stats;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::bounds::{self, ErrorModel};
use crate::fp::RoundingMode;
use crate::linalg::{ComplexMatrix, ComplexVector, PolicyMode, PrecisionPolicy};
use crate::rng::{complex_normal, complex_normal_matrix, complex_normal_vector, substream};
use crate::transceiver::{
    mrc_combine, mrt_precode, zf_beta, zf_detect_ne, zf_precode_ne, ChannelRealization,
    TransceiverError, UplinkSignal,
};

pub use config::{format_label, mode_label, ConfigError, Csi, ExperimentConfig, Scenario};
pub use output::{emit_csv, parse_csv, read_csv, write_csv, CsvError, COLUMNS};

/// An `M×K` channel with iid CN(0, 1) entries.
pub fn draw_channel<R: Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> ChannelRealization {
    ChannelRealization::new(complex_normal_matrix(rng, m, k))
}

/// Per-entry variance `1/(τρ+1)` of the pilot-based channel estimate error.
pub fn mmse_error_variance(tau: usize, rho: f64) -> f64 {
    1.0 / (tau as f64 * rho + 1.0)
}

/// MMSE estimate of `H` from `τ` orthogonal pilots at per-symbol SNR `ρ`.
///
/// With `ρ_p = τρ` the despread observation is `√ρ_p·H + N` and the estimate
/// `Ĥ = √ρ_p/(ρ_p+1)·(√ρ_p·H + N)`. Its entries have variance `ρ_p/(ρ_p+1)`
/// and the error `H − Ĥ` has variance `1/(ρ_p+1)` and is independent of `Ĥ`.
pub fn estimate_channel_mmse<R: Rng + ?Sized>(
    h: &ComplexMatrix,
    tau: usize,
    rho: f64,
    rng: &mut R,
) -> ComplexMatrix {
    let rp = tau as f64 * rho;
    let a = rp.sqrt();
    ComplexMatrix::from_fn(h.rows(), h.cols(), |i, j| {
        (a * h[(i, j)] + complex_normal(rng)) * (a / (rp + 1.0))
    })
}

/// One Monte Carlo trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Per-user SINR with the full-precision transceiver.
    pub sinr_reference: Vec<f64>,
    /// Per-user SINR with the emulated transceiver; empty on breakdown.
    pub sinr: Vec<f64>,
    /// Sum rate in bits/s/Hz after pilot overhead; `None` on breakdown.
    pub rate: Option<f64>,
    pub rate_reference: f64,
    /// Norm of the output error against the 64-bit run on the unrounded inputs.
    pub total_error: f64,
    /// Norm of the output error against the 64-bit run on the rounded inputs.
    pub arith_error: f64,
    /// `arith_error` relative to the reference output norm.
    pub rel_error: f64,
    /// Multiplies the bound factor to give the error bound of this draw.
    pub bound_scale: f64,
    /// `κ₂(HᴴH)` of the rounded channel; 1 for single-user draws.
    pub kappa: f64,
    /// `‖H‖₂‖z‖₂/‖HᴴH·r‖₂` for zero-forcing detection.
    pub backward_ratio: Option<f64>,
    pub breakdown: bool,
}

impl TrialRecord {
    fn breakdown(sinr_reference: Vec<f64>, rate_reference: f64, kappa: f64) -> Self {
        TrialRecord {
            sinr_reference,
            sinr: vec![],
            rate: None,
            rate_reference,
            total_error: f64::NAN,
            arith_error: f64::NAN,
            rel_error: f64::NAN,
            bound_scale: f64::NAN,
            kappa,
            backward_ratio: None,
            breakdown: true,
        }
    }
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

fn rate_of(sinr: &[f64], data_fraction: f64) -> f64 {
    data_fraction * sinr.iter().map(|&s| log2_1p(s)).sum::<f64>()
}

/// A grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub m: usize,
    pub rho_db: f64,
}

/// The per-trial stream key: depends on the grid point and trial index
/// only, so different formats see the same channels and noise.
fn trial_stream(seed: u64, point: GridPoint, trial: usize) -> rand_chacha::ChaCha8Rng {
    substream(
        seed,
        &[point.m as u64, point.rho_db.to_bits(), trial as u64],
    )
}

fn trial_policy(policy: &PrecisionPolicy, point: GridPoint, trial: usize) -> PrecisionPolicy {
    match policy.rounding {
        RoundingMode::Stochastic { seed } => {
            use rand::RngCore;
            let s = substream(
                seed,
                &[point.m as u64, point.rho_db.to_bits(), trial as u64, 1],
            )
            .next_u64();
            policy.with_rounding(RoundingMode::Stochastic { seed: s })
        }
        RoundingMode::NearestEven => *policy,
    }
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Runs one trial of `config` at `point`.
pub fn run_trial(config: &ExperimentConfig, point: GridPoint, trial: usize) -> TrialRecord {
    let mut rng = trial_stream(config.seed, point, trial);
    let policy = trial_policy(&config.policy, point, trial);
    let rho = bounds::db_to_linear(point.rho_db);
    let full = PrecisionPolicy::full();
    let m = point.m;
    let k = config.users();

    let channel = draw_channel(m, k, &mut rng);
    let (channel, sigma_e2) = match config.csi {
        Csi::Perfect => (channel, 0.0),
        Csi::ImperfectMmse { pilots, .. } => {
            let est = estimate_channel_mmse(channel.h(), pilots, rho, &mut rng);
            (
                ChannelRealization::with_estimate(channel.h().clone(), est).expect("same shape"),
                mmse_error_variance(pilots, rho),
            )
        }
    };
    let frac = config.csi.data_fraction();
    let mut rounder = policy.machine().expect("validated policy");

    match config.scenario {
        Scenario::Simo => {
            let sig = UplinkSignal::new(
                channel.h(),
                complex_normal_vector(&mut rng, 1),
                &complex_normal_vector(&mut rng, m),
                rho,
            );
            let h = channel.known().column(0);
            let r_l = mrc_combine(&h, &sig.z, &policy).expect("lengths match");
            let r = mrc_combine(&h, &sig.z, &full).expect("lengths match");
            let hr = rounder.round_vector(&h);
            let zr = rounder.round_vector(&sig.z);
            let r_a = mrc_combine(&hr, &zr, &full).expect("lengths match");
            let g = h.norm2_sqr();
            let noise = (1.0 + rho * sigma_e2) * g;
            let dr = (r_l - r).norm();
            let sinr_ref = vec![rho * g * g / noise];
            let sinr = vec![rho * g * g / (noise + dr * dr)];
            let arith = (r_l - r_a).norm();
            TrialRecord {
                rate: Some(rate_of(&sinr, frac)),
                rate_reference: rate_of(&sinr_ref, frac),
                sinr_reference: sinr_ref,
                sinr,
                total_error: dr,
                arith_error: arith,
                rel_error: arith / r_a.norm(),
                bound_scale: hr.norm2() * zr.norm2(),
                kappa: 1.0,
                backward_ratio: None,
                breakdown: false,
            }
        }
        Scenario::Miso => {
            let h = channel.h().column(0);
            let x = complex_normal(&mut rng);
            let s_l = mrt_precode(&h, x, &policy).expect("nonzero channel");
            let norm = h.norm2();
            let s: ComplexVector = h.iter().map(|z| z / norm * x).collect();
            let w = rounder.round_vector(&h.iter().map(|z| z / norm).collect());
            let xr = rounder.round_scalar(x);
            let s_a: ComplexVector = {
                let mut fm = full.machine().expect("fp64");
                w.iter().map(|&wi| fm.cmul(wi, xr)).collect()
            };
            let ds = s_l.sub(&s);
            let leak = inner(&h, &ds).norm_sqr();
            let sinr_ref = vec![rho * norm * norm];
            let sinr = vec![rho * norm * norm / (rho * leak + 1.0)];
            let arith = s_l.sub(&s_a).norm2();
            TrialRecord {
                rate: Some(rate_of(&sinr, frac)),
                rate_reference: rate_of(&sinr_ref, frac),
                sinr_reference: sinr_ref,
                sinr,
                total_error: ds.norm2(),
                arith_error: arith,
                rel_error: arith / xr.norm(),
                bound_scale: xr.norm(),
                kappa: 1.0,
                backward_ratio: None,
                breakdown: false,
            }
        }
        Scenario::MuSimo => {
            let sig = UplinkSignal::new(
                channel.h(),
                complex_normal_vector(&mut rng, k),
                &complex_normal_vector(&mut rng, m),
                rho,
            );
            let hk = channel.known();
            let r = zf_detect_ne(hk, &sig.z, &full).expect("full precision solve");
            let inv = hk.gram_inverse().expect("nonsingular channel");
            let noise: Vec<f64> = (0..k)
                .map(|i| (1.0 + rho * k as f64 * sigma_e2) * inv[(i, i)].re)
                .collect();
            let sinr_ref: Vec<f64> = noise.iter().map(|&n| rho / n).collect();
            let hr = rounder.round_matrix(hk);
            let zr = rounder.round_vector(&sig.z);
            let kappa = hr.gram_condition_number();
            let rate_reference = rate_of(&sinr_ref, frac);
            let r_l = match zf_detect_ne(hk, &sig.z, &policy) {
                Ok(v) => v,
                Err(TransceiverError::Breakdown { .. }) => {
                    return TrialRecord::breakdown(sinr_ref, rate_reference, kappa)
                }
                Err(e) => panic!("zero-forcing detection failed: {e}"),
            };
            let r_a = zf_detect_ne(&hr, &zr, &full).expect("full precision solve");
            let dr = r_l.sub(&r);
            let sinr: Vec<f64> = (0..k)
                .map(|i| rho / (noise[i] + dr[i].norm_sqr()))
                .collect();
            let arith = r_l.sub(&r_a).norm2();
            let hhr: ComplexVector = {
                let hr_r: ComplexVector = (0..m)
                    .map(|i| hr.row(i).iter().zip(r_a.iter()).map(|(a, b)| a * b).sum())
                    .collect();
                (0..k).map(|j| inner(&hr.column(j), &hr_r)).collect()
            };
            TrialRecord {
                rate: Some(rate_of(&sinr, frac)),
                rate_reference,
                sinr_reference: sinr_ref,
                sinr,
                total_error: dr.norm2(),
                arith_error: arith,
                rel_error: arith / r_a.norm2(),
                bound_scale: kappa * r_a.norm2(),
                kappa,
                backward_ratio: Some(hr.spectral_norm() * zr.norm2() / hhr.norm2()),
                breakdown: false,
            }
        }
        Scenario::MuMiso => {
            let h = channel.h();
            let x = complex_normal_vector(&mut rng, k);
            let beta = zf_beta(m, k);
            let sb = Complex64::new(beta.sqrt(), 0.0);
            let s = zf_precode_ne(h, &x, &full)
                .expect("full precision solve")
                .scale(sb);
            let sinr_ref = vec![rho * beta; k];
            let hr = rounder.round_matrix(h);
            let xr = rounder.round_vector(&x);
            let kappa = hr.gram_condition_number();
            let rate_reference = rate_of(&sinr_ref, frac);
            let s_l = match zf_precode_ne(h, &x, &policy) {
                Ok(v) => v.scale(sb),
                Err(TransceiverError::Breakdown { .. }) => {
                    return TrialRecord::breakdown(sinr_ref, rate_reference, kappa)
                }
                Err(e) => panic!("zero-forcing precoding failed: {e}"),
            };
            let s_a = zf_precode_ne(&hr, &xr, &full)
                .expect("full precision solve")
                .scale(sb);
            let ds = s_l.sub(&s);
            let sinr: Vec<f64> = (0..k)
                .map(|j| rho * beta / (rho * inner(&h.column(j), &ds).norm_sqr() + 1.0))
                .collect();
            let arith = s_l.sub(&s_a).norm2();
            TrialRecord {
                rate: Some(rate_of(&sinr, frac)),
                rate_reference,
                sinr_reference: sinr_ref,
                sinr,
                total_error: ds.norm2(),
                arith_error: arith,
                rel_error: arith / s_a.norm2(),
                bound_scale: s_a.norm2(),
                kappa,
                backward_ratio: None,
                breakdown: false,
            }
        }
    }
}

/// The bound factor for one draw; `bound_scale · factor` bounds `arith_error`.
///
/// Mixed policies use the blocked factor for the combining inner product
/// and the low-precision factors elsewhere.
///
/// Infinite when a denominator of the factor vanishes at this precision.
pub fn bound_factor(
    scenario: Scenario,
    policy: &PrecisionPolicy,
    m: usize,
    k: usize,
    kappa: f64,
    model: ErrorModel,
) -> Option<f64> {
    let u = policy.working_format().unit_roundoff();
    let r = match (scenario, policy.mode) {
        (Scenario::Simo, PolicyMode::Mixed { block_size }) => bounds::xi_bn_with(
            block_size,
            m,
            policy.low.unit_roundoff(),
            policy.high.unit_roundoff(),
            model,
        )
        .map(|x| std::f64::consts::SQRT_2 * x),
        (Scenario::Simo, _) => bounds::delta_simo_with(m, u, model),
        (Scenario::Miso, _) => bounds::delta_miso_with(u, model),
        (Scenario::MuSimo, _) => bounds::c_u_with(m, k, u, model),
        (Scenario::MuMiso, _) => bounds::c_d_with(m, k, u, model, kappa.max(1.0)),
    };
    match r {
        Ok(f) => Some(f),
        // n·u ≥ 1: the bound exists but says nothing
        Err(bounds::BoundError::PrecisionTooLow(_)) => Some(f64::INFINITY),
        Err(_) => None,
    }
}

/// Aggregates of one grid point; these are the CSV columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scenario: Scenario,
    pub m: usize,
    pub k: usize,
    pub rho_db: f64,
    pub format: String,
    pub mode: String,
    pub block_size: Option<usize>,
    pub lambda: f64,
    pub mean_rate: f64,
    pub rate_stderr: f64,
    pub median_rel_err: f64,
    pub p99_rel_err: f64,
    pub bound_violation_rate: f64,
    pub breakdown_rate: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, m: usize, rho_db: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.m == m && r.rho_db == rho_db)
    }
}

pub fn grid(config: &ExperimentConfig) -> Vec<GridPoint> {
    config
        .m_grid
        .iter()
        .flat_map(|&m| {
            config
                .rho_db_grid
                .iter()
                .map(move |&rho_db| GridPoint { m, rho_db })
        })
        .collect()
}

/// All trials at one grid point, in trial order.
pub fn run_point(config: &ExperimentConfig, point: GridPoint) -> Vec<TrialRecord> {
    (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, point, t))
        .collect()
}

/// Same trials as [`run_point`], one after another.
pub fn run_point_serial(config: &ExperimentConfig, point: GridPoint) -> Vec<TrialRecord> {
    (0..config.trials)
        .map(|t| run_trial(config, point, t))
        .collect()
}

pub fn summarize(config: &ExperimentConfig, point: GridPoint, records: &[TrialRecord]) -> SweepRow {
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| !r.breakdown).collect();
    let rates: Vec<f64> = ok.iter().filter_map(|r| r.rate).collect();
    let (mean_rate, rate_stderr) = stats::mean_stderr(&rates);
    let mut errs: Vec<f64> = ok.iter().map(|r| r.rel_error).collect();
    errs.sort_by(f64::total_cmp);
    let model = ErrorModel::Probabilistic(config.lambda);
    let violations = violation_rate(config, point, &ok, model);
    SweepRow {
        scenario: config.scenario,
        m: point.m,
        k: config.users(),
        rho_db: point.rho_db,
        format: format_label(&config.policy),
        mode: mode_label(&config.policy).to_string(),
        block_size: config.policy.block_size(),
        lambda: config.lambda,
        mean_rate,
        rate_stderr,
        median_rel_err: stats::quantile_sorted(&errs, 0.5),
        p99_rel_err: stats::quantile_sorted(&errs, 0.99),
        bound_violation_rate: violations,
        breakdown_rate: (records.len() - ok.len()) as f64 / records.len() as f64,
        trials: records.len(),
        seed: config.seed,
    }
}

fn violation_rate(
    config: &ExperimentConfig,
    point: GridPoint,
    ok: &[&TrialRecord],
    model: ErrorModel,
) -> f64 {
    if ok.is_empty() {
        return f64::NAN;
    }
    let mut count = 0usize;
    for r in ok {
        let Some(f) = bound_factor(
            config.scenario,
            &config.policy,
            point.m,
            config.users(),
            r.kappa,
            model,
        ) else {
            return f64::NAN;
        };
        if r.arith_error > f * r.bound_scale {
            count += 1;
        }
    }
    count as f64 / ok.len() as f64
}

/// Runs every grid point; deterministic in the seed.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult, ConfigError> {
    config.validate()?;
    let rows = grid(config)
        .into_iter()
        .map(|p| summarize(config, p, &run_point(config, p)))
        .collect();
    Ok(SweepResult {
        config: config.clone(),
        rows,
    })
}

/// Violation rates of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationRow {
    pub m: usize,
    pub rho_db: f64,
    /// `(λ, rate)` pairs.
    pub probabilistic: Vec<(f64, f64)>,
    pub deterministic: f64,
    pub median_rel_err: f64,
    pub breakdowns: usize,
    pub trials: usize,
    pub median_backward_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ViolationRow>,
}

pub const VERIFY_LAMBDAS: [f64; 3] = [0.5, 1.0, 3.0];

/// Empirical failure rates of the error bounds at each grid point.
pub fn verify_bounds(config: &ExperimentConfig) -> Result<ViolationReport, ConfigError> {
    config.validate()?;
    let rows = grid(config)
        .into_iter()
        .map(|p| {
            let records = run_point(config, p);
            let ok: Vec<&TrialRecord> = records.iter().filter(|r| !r.breakdown).collect();
            let probabilistic = VERIFY_LAMBDAS
                .iter()
                .map(|&l| {
                    (
                        l,
                        violation_rate(config, p, &ok, ErrorModel::Probabilistic(l)),
                    )
                })
                .collect();
            let mut errs: Vec<f64> = ok.iter().map(|r| r.rel_error).collect();
            errs.sort_by(f64::total_cmp);
            let mut ratios: Vec<f64> = ok.iter().filter_map(|r| r.backward_ratio).collect();
            ratios.sort_by(f64::total_cmp);
            ViolationRow {
                m: p.m,
                rho_db: p.rho_db,
                probabilistic,
                deterministic: violation_rate(config, p, &ok, ErrorModel::Deterministic),
                median_rel_err: stats::quantile_sorted(&errs, 0.5),
                breakdowns: records.len() - ok.len(),
                trials: records.len(),
                median_backward_ratio: (!ratios.is_empty())
                    .then(|| stats::quantile_sorted(&ratios, 0.5)),
            }
        })
        .collect();
    Ok(ViolationReport {
        config: config.clone(),
        rows,
    })
}
