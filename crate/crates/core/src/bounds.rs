//! Closed-form rounding-error and achievable-rate bounds.
//!
//! Everything here is evaluated in 64-bit arithmetic whatever format is being
//! analyzed. `u` is a unit roundoff, `lambda` the confidence knob of the
//! probabilistic error factor, `rho` a linear SNR.

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::linalg::ComplexMatrix;
use crate::quadrature;
use crate::rng::{complex_normal_matrix, substream};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundError {
    #[error("unit roundoff must lie in [0, 1), got {0}")]
    InvalidRoundoff(f64),
    #[error("lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("precision too low for this bound: {0}")]
    PrecisionTooLow(String),
    #[error("the K = 2 quadrature needs K = 2, got K = {0}")]
    QuadratureNeedsK2(usize),
}

fn check_u(u: f64) -> Result<(), BoundError> {
    if !(0.0..1.0).contains(&u) {
        return Err(BoundError::InvalidRoundoff(u));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<(), BoundError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(BoundError::InvalidLambda(lambda));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<(), BoundError> {
    if !(rho > 0.0) {
        return Err(BoundError::InvalidParameter(format!(
            "SNR must be positive, got {rho}"
        )));
    }
    Ok(())
}

fn check_users(m: usize, k: usize) -> Result<(), BoundError> {
    if k == 0 || m < k + 1 {
        return Err(BoundError::InvalidParameter(format!(
            "need M ≥ K + 1 and K ≥ 1, got M = {m}, K = {k}"
        )));
    }
    Ok(())
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// Converts decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `γₙ = exp(λ√n·u + n·u²/(1−u)) − 1`.
pub fn gamma_n(n: usize, u: f64, lambda: f64) -> Result<f64, BoundError> {
    check_u(u)?;
    check_lambda(lambda)?;
    let n = n as f64;
    Ok((lambda * n.sqrt() * u + n * u * u / (1.0 - u)).exp_m1())
}

/// Leading term `λ√n·u` of [`gamma_n`].
pub fn gamma_first_order(n: usize, u: f64, lambda: f64) -> Result<f64, BoundError> {
    check_u(u)?;
    check_lambda(lambda)?;
    Ok(lambda * (n as f64).sqrt() * u)
}

/// Worst-case factor `n·u/(1 − n·u)`.
pub fn gamma_deterministic(n: usize, u: f64) -> Result<f64, BoundError> {
    check_u(u)?;
    let nu = n as f64 * u;
    if nu >= 1.0 {
        return Err(BoundError::PrecisionTooLow(format!("n·u = {nu} ≥ 1")));
    }
    Ok(nu / (1.0 - nu))
}

/// Number of `b`-term blocks in a `2n`-term real expansion.
pub fn block_count(b: usize, n: usize) -> usize {
    (2 * n).div_ceil(b)
}

/// Which cumulative error factor a bound uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorModel {
    /// [`gamma_n`] with this `λ`.
    Probabilistic(f64),
    /// [`gamma_deterministic`].
    Deterministic,
}

impl ErrorModel {
    pub fn gamma(&self, n: usize, u: f64) -> Result<f64, BoundError> {
        match *self {
            ErrorModel::Probabilistic(lambda) => gamma_n(n, u, lambda),
            ErrorModel::Deterministic => gamma_deterministic(n, u),
        }
    }
}

/// Mixed-precision factor `u_l + γ_{b−1}(u_l) + γ_{⌈2n/b⌉−1}(u_h)`.
///
/// Requires `u_h ≤ u_l²`, i.e. at least doubled precision in the high stage.
pub fn xi_bn(b: usize, n: usize, u_l: f64, u_h: f64, lambda: f64) -> Result<f64, BoundError> {
    xi_bn_with(b, n, u_l, u_h, ErrorModel::Probabilistic(lambda))
}

pub fn xi_bn_with(
    b: usize,
    n: usize,
    u_l: f64,
    u_h: f64,
    model: ErrorModel,
) -> Result<f64, BoundError> {
    if b == 0 || n == 0 {
        return Err(BoundError::InvalidParameter(
            "block size and length must be positive".into(),
        ));
    }
    check_u(u_l)?;
    check_u(u_h)?;
    if u_h > u_l * u_l {
        return Err(BoundError::InvalidParameter(format!(
            "high-precision roundoff {u_h:e} exceeds the square of the low one ({:e})",
            u_l * u_l
        )));
    }
    Ok(u_l + model.gamma(b - 1, u_l)? + model.gamma(block_count(b, n) - 1, u_h)?)
}

/// `√2·γ_{2M}`: relative error of an `M`-term combining inner product.
pub fn delta_simo(m: usize, u: f64, lambda: f64) -> Result<f64, BoundError> {
    delta_simo_with(m, u, ErrorModel::Probabilistic(lambda))
}

pub fn delta_simo_with(m: usize, u: f64, model: ErrorModel) -> Result<f64, BoundError> {
    Ok(std::f64::consts::SQRT_2 * model.gamma(2 * m, u)?)
}

/// `√2·γ₂`: per-entry relative error of the precoding scalar products.
pub fn delta_miso(u: f64, lambda: f64) -> Result<f64, BoundError> {
    delta_miso_with(u, ErrorModel::Probabilistic(lambda))
}

pub fn delta_miso_with(u: f64, model: ErrorModel) -> Result<f64, BoundError> {
    Ok(std::f64::consts::SQRT_2 * model.gamma(2, u)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    ExactFormula,
    AsymptoticLimit,
}

/// A rate bound in bits/s/Hz with the intermediate values it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBoundResult {
    pub value_bits: f64,
    pub regime: Regime,
    pub components: Vec<(&'static str, f64)>,
}

impl RateBoundResult {
    fn exact(value_bits: f64, components: Vec<(&'static str, f64)>) -> Self {
        RateBoundResult {
            value_bits: value_bits.max(0.0),
            regime: Regime::ExactFormula,
            components,
        }
    }

    fn limit(value_bits: f64, components: Vec<(&'static str, f64)>) -> Self {
        RateBoundResult {
            value_bits: value_bits.max(0.0),
            regime: Regime::AsymptoticLimit,
            components,
        }
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components
            .iter()
            .find(|(n, _)| *n == name)
            .map(|&(_, v)| v)
    }
}

/// Single-user uplink lower bound with MRC combining.
pub fn lb_rate_simo(
    m: usize,
    rho: f64,
    u: f64,
    lambda: f64,
) -> Result<RateBoundResult, BoundError> {
    check_rho(rho)?;
    if m == 0 {
        return Err(BoundError::InvalidParameter("M must be positive".into()));
    }
    let d = delta_simo(m, u, lambda)?;
    let mf = m as f64;
    let sinr = rho * mf / (1.0 + d * d * mf * (rho + 1.0));
    Ok(RateBoundResult::exact(
        log2_1p(sinr),
        vec![("delta_simo", d), ("sinr", sinr)],
    ))
}

/// Limit of [`lb_rate_simo`] as `ρ → ∞`: `log₂(1 + δ_SIMO⁻²)`.
pub fn lb_rate_simo_snr_ceiling(
    m: usize,
    u: f64,
    lambda: f64,
) -> Result<RateBoundResult, BoundError> {
    let d = delta_simo(m, u, lambda)?;
    let v = if d == 0.0 {
        f64::INFINITY
    } else {
        log2_1p(1.0 / (d * d))
    };
    Ok(RateBoundResult::limit(v, vec![("delta_simo", d)]))
}

/// Limit of [`lb_rate_simo`] as `M → ∞` with `u > 0`.
pub fn lb_rate_simo_large_m(u: f64) -> Result<RateBoundResult, BoundError> {
    check_u(u)?;
    let v = if u == 0.0 { f64::INFINITY } else { 0.0 };
    Ok(RateBoundResult::limit(v, vec![]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MMax {
    /// Exact arithmetic: the bound increases in `M` without limit.
    Unbounded,
    Finite(u64),
}

/// Antenna count maximizing the SIMO bound, `⌊1/(2uλ√(ρ+1))⌋`.
pub fn m_max_simo(rho: f64, u: f64, lambda: f64) -> Result<MMax, BoundError> {
    check_rho(rho)?;
    check_u(u)?;
    check_lambda(lambda)?;
    if u == 0.0 {
        return Ok(MMax::Unbounded);
    }
    Ok(MMax::Finite(
        (1.0 / (2.0 * u * lambda * (rho + 1.0).sqrt())).floor() as u64,
    ))
}

/// Single-user downlink lower bound with MRT precoding.
pub fn lb_rate_miso(
    m: usize,
    rho: f64,
    u: f64,
    lambda: f64,
) -> Result<RateBoundResult, BoundError> {
    check_rho(rho)?;
    if m == 0 {
        return Err(BoundError::InvalidParameter("M must be positive".into()));
    }
    let d = delta_miso(u, lambda)?;
    let x = rho * m as f64;
    let sinr = x / (1.0 + d * d * x);
    Ok(RateBoundResult::exact(
        log2_1p(sinr),
        vec![("delta_miso", d), ("sinr", sinr)],
    ))
}

/// Limit of [`lb_rate_miso`] as `M → ∞` or `ρ → ∞`: `log₂(1 + δ_MISO⁻²)`.
pub fn lb_rate_miso_ceiling(u: f64, lambda: f64) -> Result<RateBoundResult, BoundError> {
    let d = delta_miso(u, lambda)?;
    let v = if d == 0.0 {
        f64::INFINITY
    } else {
        log2_1p(1.0 / (d * d))
    };
    Ok(RateBoundResult::limit(v, vec![("delta_miso", d)]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateGap {
    /// Downlink bound minus uplink bound at the given point.
    pub value_bits: f64,
    /// Gap as `M → ∞`, where the uplink bound vanishes.
    pub large_m_limit: f64,
    /// Gap as `ρ → ∞` at this `M`.
    pub high_snr_limit: f64,
}

pub fn rate_gap(m: usize, rho: f64, u: f64, lambda: f64) -> Result<RateGap, BoundError> {
    let miso = lb_rate_miso(m, rho, u, lambda)?.value_bits;
    let simo = lb_rate_simo(m, rho, u, lambda)?.value_bits;
    let ceiling = lb_rate_miso_ceiling(u, lambda)?.value_bits;
    let simo_ceiling = lb_rate_simo_snr_ceiling(m, u, lambda)?.value_bits;
    let (large_m_limit, high_snr_limit) = if u == 0.0 {
        (0.0, 0.0)
    } else {
        (ceiling, ceiling - simo_ceiling)
    };
    Ok(RateGap {
        value_bits: miso - simo,
        large_m_limit,
        high_snr_limit,
    })
}

/// `c₁ = 2K(γ_{2M} + γ_{6K+1}/(1 − 2K·γ_{2K+1}))`, shared by detection and precoding.
pub fn c1_u(m: usize, k: usize, u: f64, lambda: f64) -> Result<f64, BoundError> {
    c1_u_with(m, k, u, ErrorModel::Probabilistic(lambda))
}

pub fn c1_u_with(m: usize, k: usize, u: f64, model: ErrorModel) -> Result<f64, BoundError> {
    if m == 0 || k == 0 {
        return Err(BoundError::InvalidParameter(
            "M and K must be positive".into(),
        ));
    }
    let kf = k as f64;
    let denom = 1.0 - 2.0 * kf * model.gamma(2 * k + 1, u)?;
    if denom <= 0.0 {
        return Err(BoundError::PrecisionTooLow(format!(
            "1 − 2K·γ_(2K+1) = {denom} is not positive"
        )));
    }
    Ok(2.0 * kf * (model.gamma(2 * m, u)? + model.gamma(6 * k + 1, u)? / denom))
}

/// Detection factor `cᵘ = c₁ + √(2K)·γ_{2M}`.
pub fn c_u(m: usize, k: usize, u: f64, lambda: f64) -> Result<f64, BoundError> {
    c_u_with(m, k, u, ErrorModel::Probabilistic(lambda))
}

pub fn c_u_with(m: usize, k: usize, u: f64, model: ErrorModel) -> Result<f64, BoundError> {
    Ok(c1_u_with(m, k, u, model)? + (2.0 * k as f64).sqrt() * model.gamma(2 * m, u)?)
}

/// Precoding factor `c^d = c₁κ + √(2K)·γ_{2K}(1 + c₁κ)` at `κ = κ₂(HᴴH)`.
pub fn c_d(m: usize, k: usize, u: f64, lambda: f64, kappa2: f64) -> Result<f64, BoundError> {
    c_d_with(m, k, u, ErrorModel::Probabilistic(lambda), kappa2)
}

pub fn c_d_with(
    m: usize,
    k: usize,
    u: f64,
    model: ErrorModel,
    kappa2: f64,
) -> Result<f64, BoundError> {
    if !(kappa2 >= 1.0) {
        return Err(BoundError::InvalidParameter(format!(
            "condition number must be ≥ 1, got {kappa2}"
        )));
    }
    let ck = c1_u_with(m, k, u, model)? * kappa2;
    Ok(ck + (2.0 * k as f64).sqrt() * model.gamma(2 * k, u)? * (1.0 + ck))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsilonMethod {
    MonteCarlo { samples: usize, seed: u64 },
    QuadratureK2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

const CHUNK: usize = 4096;

/// Mean and standard error of `f(κ₂(HᴴH))` over iid Rayleigh `M×K` draws.
///
/// Samples are split into fixed chunks, each with its own keyed stream, so
/// the estimate does not depend on the thread count.
pub fn condition_moment<F>(m: usize, k: usize, samples: usize, seed: u64, f: F) -> Estimate
where
    F: Fn(f64) -> f64 + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, &[0x0u64, m as u64, k as u64, c as u64]);
            let n = CHUNK.min(samples - c * CHUNK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..n {
                let h = complex_normal_matrix(&mut rng, m, k);
                let v = f(gram_condition(&h));
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let n = samples as f64;
    let mean = s / n;
    let var = if samples > 1 {
        (s2 - n * mean * mean) / (n - 1.0)
    } else {
        0.0
    };
    Estimate {
        mean,
        stderr: (var.max(0.0) / n).sqrt(),
        samples,
    }
}

/// `κ₂(HᴴH)`; closed-form 2×2 eigenvalues for two columns.
fn gram_condition(h: &ComplexMatrix) -> f64 {
    if h.cols() == 1 {
        return 1.0;
    }
    if h.cols() == 2 {
        let (mut a, mut c) = (0.0, 0.0);
        let mut b = num_complex::Complex64::new(0.0, 0.0);
        for i in 0..h.rows() {
            let (x, y) = (h[(i, 0)], h[(i, 1)]);
            a += x.norm_sqr();
            c += y.norm_sqr();
            b += x.conj() * y;
        }
        let mid = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b.norm_sqr()).sqrt();
        // λ_min = det/λ_max avoids cancellation
        let hi = mid + rad;
        let lo = (a * c - b.norm_sqr()) / hi;
        return hi / lo;
    }
    h.gram_condition_number()
}

/// Normalizing constant `Γ(2M)/(Γ(M)Γ(M−1))` of the two-user condition-number density, in logs.
fn ln_k2_constant(m: usize) -> f64 {
    let m = m as f64;
    ln_gamma(2.0 * m) - ln_gamma(m) - ln_gamma(m - 1.0)
}

/// Density of `κ₂(HᴴH)` for `K = 2`, at `c ≥ 1`.
pub fn condition_density_k2(m: usize, c: f64) -> f64 {
    if c < 1.0 {
        return 0.0;
    }
    let mf = m as f64;
    (ln_k2_constant(m) + 2.0 * (c - 1.0).ln() + (mf - 2.0) * c.ln() - 2.0 * mf * (c + 1.0).ln())
        .exp()
}

/// `∫₁^∞ c^p f(c) dc` for the two-user density, mapped to `t = 1/c ∈ (0, 1]`.
fn k2_moment(m: usize, p: i32) -> f64 {
    let mf = m as f64;
    let lk = ln_k2_constant(m);
    // c^p f(c) dc = K (1−t)² t^(M−2−p) (1+t)^(−2M) dt
    let expo = mf - 2.0 - p as f64;
    let g = move |t: f64| {
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        (lk + 2.0 * (1.0 - t).ln() + expo * t.ln() - 2.0 * mf * t.ln_1p()).exp()
    };
    quadrature::integrate(g, 0.0, 1.0, 1e-300, 1e-12).value
}

/// Probability mass of the two-user density; 1 up to quadrature error.
pub fn condition_density_k2_mass(m: usize) -> f64 {
    k2_moment(m, 0)
}

/// `Υ(M, K) = E{κ₂(HᴴH)²}` over iid Rayleigh channels.
pub fn upsilon(m: usize, k: usize, method: UpsilonMethod) -> Result<f64, BoundError> {
    check_users(m, k)?;
    if k == 1 {
        return Ok(1.0);
    }
    match method {
        UpsilonMethod::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(BoundError::InvalidParameter(
                    "need at least one sample".into(),
                ));
            }
            Ok(condition_moment(m, k, samples, seed, |c| c * c).mean)
        }
        UpsilonMethod::QuadratureK2 => {
            if k != 2 {
                return Err(BoundError::QuadratureNeedsK2(k));
            }
            if m < 4 {
                return Err(BoundError::InvalidParameter(format!(
                    "second moment of the two-user condition number is infinite for M = {m}"
                )));
            }
            Ok(k2_moment(m, 2))
        }
    }
}

/// Multi-user uplink sum-rate lower bound with NE-based ZF detection.
pub fn lb_sumrate_mu_simo(
    m: usize,
    k: usize,
    rho: f64,
    u: f64,
    lambda: f64,
    upsilon_value: f64,
) -> Result<RateBoundResult, BoundError> {
    check_users(m, k)?;
    check_rho(rho)?;
    let cu = c_u(m, k, u, lambda)?;
    let x = rho * (m - k) as f64;
    let sinr = x / (1.0 + cu * cu * (x + 1.0) * upsilon_value);
    Ok(RateBoundResult::exact(
        k as f64 * log2_1p(sinr),
        vec![("c_u", cu), ("upsilon", upsilon_value), ("sinr", sinr)],
    ))
}

/// Multi-user downlink sum-rate lower bound with NE-based ZF precoding.
pub fn lb_sumrate_mu_miso(
    m: usize,
    k: usize,
    rho: f64,
    u: f64,
    lambda: f64,
    expected_cd_sq: f64,
) -> Result<RateBoundResult, BoundError> {
    check_users(m, k)?;
    check_rho(rho)?;
    check_u(u)?;
    check_lambda(lambda)?;
    let x = rho * (m - k) as f64;
    let sinr = x / (1.0 + expected_cd_sq * rho * (m * k) as f64);
    Ok(RateBoundResult::exact(
        k as f64 * log2_1p(sinr),
        vec![("expected_cd_sq", expected_cd_sq), ("sinr", sinr)],
    ))
}

/// Monte Carlo `E{(c^d)²}` over the condition number of Rayleigh channels.
pub fn expected_cd_sq(
    m: usize,
    k: usize,
    u: f64,
    lambda: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate, BoundError> {
    check_users(m, k)?;
    if samples == 0 {
        return Err(BoundError::InvalidParameter(
            "need at least one sample".into(),
        ));
    }
    let c1 = c1_u(m, k, u, lambda)?;
    let g = (2.0 * k as f64).sqrt() * gamma_n(2 * k, u, lambda)?;
    Ok(condition_moment(m, k, samples, seed, |kappa| {
        let ck = c1 * kappa;
        let cd = ck + g * (1.0 + ck);
        cd * cd
    }))
}

/// How `2n/b` is counted in the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlockCounting {
    /// Real-valued `2n/b`, as in the closed form.
    #[default]
    Fractional,
    /// `⌈2n/b⌉` blocks, the count an implementation actually performs.
    Ceiling,
}

/// Summations and multiplications of one architecture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpCount {
    pub summations: f64,
    pub multiplications: f64,
}

impl OpCount {
    pub fn total(&self) -> f64 {
        self.summations + self.multiplications
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub mixed: OpCount,
    pub low: OpCount,
    pub high: OpCount,
}

impl CostModel {
    /// Relative extra summations of the mixed architecture over pure low precision.
    pub fn summation_overhead(&self) -> f64 {
        self.mixed.summations / self.low.summations - 1.0
    }

    pub fn total_overhead(&self) -> f64 {
        self.mixed.total() / self.low.total() - 1.0
    }
}

/// Operation counts for an `m×n` by `n×p` complex product, where a high
/// precision operation costs `G` low precision ones.
pub fn cost_model(
    m: usize,
    n: usize,
    p: usize,
    b: usize,
    g: usize,
    counting: BlockCounting,
) -> Result<CostModel, BoundError> {
    if m == 0 || n == 0 || p == 0 || b == 0 || g == 0 {
        return Err(BoundError::InvalidParameter(
            "dimensions, block size and G must be positive".into(),
        ));
    }
    let scale = 4.0 * (m * p) as f64;
    let two_n = 2.0 * n as f64;
    let gf = g as f64;
    let blocks = match counting {
        BlockCounting::Fractional => two_n / b as f64,
        BlockCounting::Ceiling => block_count(b, n) as f64,
    };
    Ok(CostModel {
        mixed: OpCount {
            summations: scale * (blocks * (gf - 1.0) + two_n - gf),
            multiplications: scale * two_n,
        },
        low: OpCount {
            summations: scale * (two_n - 1.0),
            multiplications: scale * two_n,
        },
        high: OpCount {
            summations: scale * gf * (two_n - 1.0),
            multiplications: scale * gf * two_n,
        },
    })
}
