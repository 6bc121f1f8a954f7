//! MRC/MRT and normal-equation zero-forcing under a precision policy.

use num_complex::Complex64;

use crate::linalg::{ComplexMatrix, ComplexVector, FpMachine, LinalgError, PrecisionPolicy};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransceiverError {
    #[error(transparent)]
    Linalg(LinalgError),
    /// Cholesky of the Gram matrix failed at the working precision.
    #[error("precision breakdown: Cholesky pivot {pivot} is {value:e}")]
    Breakdown { pivot: usize, value: f64 },
    #[error("channel vector is zero")]
    ZeroChannel,
    #[error("need M ≥ K ≥ 1, got M = {m}, K = {k}")]
    Shape { m: usize, k: usize },
}

impl From<LinalgError> for TransceiverError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::NotPositiveDefinite { pivot, value } => {
                TransceiverError::Breakdown { pivot, value }
            }
            e => TransceiverError::Linalg(e),
        }
    }
}

/// An `M×K` channel draw, optionally with the estimate the base station sees.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    h: ComplexMatrix,
    estimate: Option<ComplexMatrix>,
}

impl ChannelRealization {
    pub fn new(h: ComplexMatrix) -> Self {
        ChannelRealization { h, estimate: None }
    }

    pub fn with_estimate(
        h: ComplexMatrix,
        estimate: ComplexMatrix,
    ) -> Result<Self, TransceiverError> {
        if h.dims() != estimate.dims() {
            return Err(TransceiverError::Linalg(LinalgError::DimensionMismatch {
                op: "channel estimate",
                lhs: h.dims(),
                rhs: estimate.dims(),
            }));
        }
        Ok(ChannelRealization {
            h,
            estimate: Some(estimate),
        })
    }

    pub fn h(&self) -> &ComplexMatrix {
        &self.h
    }

    /// What the receiver or precoder works with: the estimate if any, else the true channel.
    pub fn known(&self) -> &ComplexMatrix {
        self.estimate.as_ref().unwrap_or(&self.h)
    }

    pub fn estimate(&self) -> Option<&ComplexMatrix> {
        self.estimate.as_ref()
    }

    pub fn m(&self) -> usize {
        self.h.rows()
    }

    pub fn k(&self) -> usize {
        self.h.cols()
    }
}

/// `z = √ρ·H·x + n`, built in full precision.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkSignal {
    pub x_u: ComplexVector,
    pub z: ComplexVector,
    pub rho: f64,
}

impl UplinkSignal {
    pub fn new(h: &ComplexMatrix, x_u: ComplexVector, noise: &ComplexVector, rho: f64) -> Self {
        let a = rho.sqrt();
        let z = (0..h.rows())
            .map(|i| {
                a * h
                    .row(i)
                    .iter()
                    .zip(x_u.iter())
                    .map(|(g, x)| g * x)
                    .sum::<Complex64>()
                    + noise[i]
            })
            .collect();
        UplinkSignal { x_u, z, rho }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkSignal {
    pub x_d: ComplexVector,
    pub s: ComplexVector,
    pub beta: f64,
}

/// `r = hᴴz` under the policy.
pub fn mrc_combine(
    h: &ComplexVector,
    z: &ComplexVector,
    policy: &PrecisionPolicy,
) -> Result<Complex64, TransceiverError> {
    Ok(policy.machine()?.dot(h, z)?)
}

/// `s = (h/‖h‖₂)·x_d`; the normalization is exact, only the `M` scalar
/// products are rounded.
pub fn mrt_precode(
    h: &ComplexVector,
    x_d: Complex64,
    policy: &PrecisionPolicy,
) -> Result<ComplexVector, TransceiverError> {
    let norm = h.norm2();
    if norm == 0.0 {
        return Err(TransceiverError::ZeroChannel);
    }
    let mut m = policy.machine()?;
    let w = m.round_vector(&h.iter().map(|z| z / norm).collect());
    let x = m.round_scalar(x_d);
    Ok(w.iter().map(|&wi| m.cmul(wi, x)).collect())
}

fn check_shape(h: &ComplexMatrix) -> Result<(), TransceiverError> {
    let (m, k) = h.dims();
    if k == 0 || m < k {
        return Err(TransceiverError::Shape { m, k });
    }
    Ok(())
}

/// `(HᴴH)·x = rhs` via Cholesky and two triangular sweeps, with the Gram
/// matrix formed under the machine's policy.
fn gram_solve(
    m: &mut FpMachine,
    h: &ComplexMatrix,
    rhs: &ComplexVector,
) -> Result<ComplexVector, TransceiverError> {
    let gram = m.gram(h);
    let r = m.cholesky(&gram)?;
    Ok(m.cholesky_solve(&r, rhs)?)
}

/// Zero-forcing detection `r = (HᴴH)⁻¹Hᴴz` by the normal equations.
pub fn zf_detect_ne(
    h: &ComplexMatrix,
    z: &ComplexVector,
    policy: &PrecisionPolicy,
) -> Result<ComplexVector, TransceiverError> {
    check_shape(h)?;
    let mut m = policy.machine()?;
    let c = m.adjoint_matvec(h, z)?;
    gram_solve(&mut m, h, &c)
}

/// Zero-forcing precoding `s = H(HᴴH)⁻¹x_d` by the normal equations, before
/// power normalization.
pub fn zf_precode_ne(
    h: &ComplexMatrix,
    x_d: &ComplexVector,
    policy: &PrecisionPolicy,
) -> Result<ComplexVector, TransceiverError> {
    check_shape(h)?;
    if x_d.len() != h.cols() {
        return Err(LinalgError::LengthMismatch {
            left: x_d.len(),
            right: h.cols(),
        }
        .into());
    }
    let mut m = policy.machine()?;
    let e = gram_solve(&mut m, h, x_d)?;
    Ok(m.matvec(h, &e)?)
}

/// Power normalization `β = M − K` of zero-forcing precoding.
pub fn zf_beta(m: usize, k: usize) -> f64 {
    (m - k) as f64
}

/// [`zf_precode_ne`] followed by exact `√β` scaling.
pub fn zf_downlink(
    h: &ComplexMatrix,
    x_d: ComplexVector,
    policy: &PrecisionPolicy,
) -> Result<DownlinkSignal, TransceiverError> {
    let beta = zf_beta(h.rows(), h.cols());
    let s = zf_precode_ne(h, &x_d, policy)?.scale(Complex64::new(beta.sqrt(), 0.0));
    Ok(DownlinkSignal { x_d, s, beta })
}
