//! Emulated floating-point arithmetic.
//!
//! Every elementary operation is computed exactly in the 64-bit carrier and
//! then rounded to the target format's significand width. For formats with
//! `t <= 26` the two-step scheme is free of double-rounding artifacts, and the
//! `fp64` preset is a pass-through, so the emulation is exact for all presets.

use std::fmt;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Errors raised by the emulated arithmetic.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FpError {
    #[error("non-finite operand {0}")]
    NonFinite(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("invalid format: {0}")]
    InvalidFormat(String),
    #[error("unknown format name `{0}`")]
    UnknownFormat(String),
}

/// A binary floating-point format `f = ±m·2^(e−t+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FloatFormat {
    name: &'static str,
    significand_bits: u32,
    exponent_min: i32,
    exponent_max: i32,
}

impl FloatFormat {
    pub const BFLOAT16: FloatFormat = FloatFormat::preset("bfloat16", 8, -126, 127);
    pub const FP16: FloatFormat = FloatFormat::preset("fp16", 11, -14, 15);
    pub const FP32: FloatFormat = FloatFormat::preset("fp32", 24, -126, 127);
    pub const FP64: FloatFormat = FloatFormat::preset("fp64", 53, -1022, 1023);

    pub const PRESETS: [FloatFormat; 4] = [Self::BFLOAT16, Self::FP16, Self::FP32, Self::FP64];

    const fn preset(name: &'static str, t: u32, emin: i32, emax: i32) -> Self {
        FloatFormat {
            name,
            significand_bits: t,
            exponent_min: emin,
            exponent_max: emax,
        }
    }

    /// A user-defined format. The carrier is an IEEE double, so `t` may not
    /// exceed 53 and the exponent range must fit inside the double's.
    pub fn custom(
        significand_bits: u32,
        exponent_min: i32,
        exponent_max: i32,
    ) -> Result<Self, FpError> {
        if !(2..=53).contains(&significand_bits) {
            return Err(FpError::InvalidFormat(format!(
                "significand bits must be in 2..=53, got {significand_bits}"
            )));
        }
        if exponent_min > exponent_max || exponent_min < -1022 || exponent_max > 1023 {
            return Err(FpError::InvalidFormat(format!(
                "exponent range [{exponent_min}, {exponent_max}] does not fit the 64-bit carrier"
            )));
        }
        Ok(FloatFormat::preset(
            "custom",
            significand_bits,
            exponent_min,
            exponent_max,
        ))
    }

    /// Looks up a preset by name, or parses a custom `t,emin,emax` triple.
    pub fn from_name(name: &str) -> Result<Self, FpError> {
        let key = name.trim().to_ascii_lowercase();
        if let Some(fmt) = Self::PRESETS.iter().find(|f| f.name == key) {
            return Ok(*fmt);
        }
        match key.as_str() {
            "half" | "binary16" => return Ok(Self::FP16),
            "single" | "binary32" => return Ok(Self::FP32),
            "double" | "binary64" => return Ok(Self::FP64),
            "bf16" => return Ok(Self::BFLOAT16),
            _ => {}
        }
        let parts: Vec<&str> = key
            .trim_start_matches("custom")
            .trim_matches(|c| c == '(' || c == ')')
            .split(',')
            .map(str::trim)
            .collect();
        if let [t, emin, emax] = parts.as_slice() {
            if let (Ok(t), Ok(emin), Ok(emax)) = (t.parse(), emin.parse(), emax.parse()) {
                return Self::custom(t, emin, emax);
            }
        }
        Err(FpError::UnknownFormat(name.to_string()))
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn significand_bits(&self) -> u32 {
        self.significand_bits
    }

    pub fn exponent_min(&self) -> i32 {
        self.exponent_min
    }

    pub fn exponent_max(&self) -> i32 {
        self.exponent_max
    }

    /// `u = ½·2^(1−t)`.
    pub fn unit_roundoff(&self) -> f64 {
        0.5 * 2f64.powi(1 - self.significand_bits as i32)
    }

    /// Smallest positive normalized number.
    pub fn min_normal(&self) -> f64 {
        2f64.powi(self.exponent_min)
    }

    /// Largest finite number.
    pub fn max_finite(&self) -> f64 {
        (2.0 - 2f64.powi(1 - self.significand_bits as i32)) * 2f64.powi(self.exponent_max)
    }

    /// Whether `x` has at most `t` significant bits (range is not checked).
    pub fn has_exact_significand(&self, x: f64) -> bool {
        let mut r = Rounder::new(*self, RoundingMode::NearestEven, RangeMode::Unbounded);
        r.round(x) == x
    }

    /// `t`-bit significand and, for non-zero `x`, within `[x_min, x_max]`.
    pub fn is_representable(&self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        let a = x.abs();
        self.has_exact_significand(x)
            && (a == 0.0 || (a >= self.min_normal() && a <= self.max_finite()))
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.name == "custom" {
            write!(
                f,
                "custom({},{},{})",
                self.significand_bits, self.exponent_min, self.exponent_max
            )
        } else {
            f.write_str(self.name)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoundingMode {
    #[default]
    NearestEven,
    /// Rounds away from the lower neighbour with probability equal to the
    /// fractional distance from it. The seed fixes the random stream.
    Stochastic { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RangeMode {
    /// Significand rounding only; the exponent range is ignored.
    #[default]
    Unbounded,
    /// Clamp to `±x_max` and flush magnitudes below `x_min` to zero.
    StrictIeee,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone)]
enum RoundingState {
    NearestEven,
    Stochastic(ChaCha8Rng),
}

/// A rounding context: a target format plus rounding and range modes.
///
/// Stochastic rounding advances an internal stream, so a `Rounder` is
/// deterministic for a given seed and sequence of operations.
#[derive(Debug, Clone)]
pub struct Rounder {
    format: FloatFormat,
    range: RangeMode,
    state: RoundingState,
    shift: u32,
    passthrough: bool,
}

const TINY_SCALE: f64 = 340282366920938463463374607431768211456.0; // 2^128

impl Rounder {
    pub fn new(format: FloatFormat, mode: RoundingMode, range: RangeMode) -> Self {
        let state = match mode {
            RoundingMode::NearestEven => RoundingState::NearestEven,
            RoundingMode::Stochastic { seed } => {
                RoundingState::Stochastic(ChaCha8Rng::seed_from_u64(seed))
            }
        };
        let shift = 53 - format.significand_bits;
        Rounder {
            format,
            range,
            state,
            shift,
            passthrough: shift == 0 && range == RangeMode::Unbounded,
        }
    }

    pub fn format(&self) -> FloatFormat {
        self.format
    }

    pub fn unit_roundoff(&self) -> f64 {
        self.format.unit_roundoff()
    }

    /// Rounds `x` into the format. Non-finite values pass through unchanged.
    #[inline]
    pub fn round(&mut self, x: f64) -> f64 {
        if self.passthrough {
            return x;
        }
        let r = self.round_significand(x);
        match self.range {
            RangeMode::Unbounded => r,
            RangeMode::StrictIeee => self.clamp_range(r),
        }
    }

    #[inline]
    fn round_significand(&mut self, x: f64) -> f64 {
        if self.shift == 0 || x == 0.0 || !x.is_finite() {
            return x;
        }
        if x.abs() < f64::MIN_POSITIVE {
            // carrier subnormal: work on a normalized copy
            return self.round_significand(x * TINY_SCALE) / TINY_SCALE;
        }
        let shift = self.shift;
        let bits = x.to_bits();
        let mask = (1u64 << shift) - 1;
        let low = bits & mask;
        if low == 0 {
            return x;
        }
        let base = bits & !mask;
        let up = match &mut self.state {
            RoundingState::NearestEven => {
                let half = 1u64 << (shift - 1);
                low > half || (low == half && (base >> shift) & 1 == 1)
            }
            RoundingState::Stochastic(rng) => (rng.next_u64() >> (64 - shift)) < low,
        };
        f64::from_bits(if up { base + (1u64 << shift) } else { base })
    }

    fn clamp_range(&self, r: f64) -> f64 {
        let a = r.abs();
        if a > self.format.max_finite() {
            self.format.max_finite().copysign(r)
        } else if a < self.format.min_normal() {
            0.0f64.copysign(r)
        } else {
            r
        }
    }

    #[inline]
    pub fn add(&mut self, a: f64, b: f64) -> f64 {
        self.round(a + b)
    }

    #[inline]
    pub fn sub(&mut self, a: f64, b: f64) -> f64 {
        self.round(a - b)
    }

    #[inline]
    pub fn mul(&mut self, a: f64, b: f64) -> f64 {
        self.round(a * b)
    }

    #[inline]
    pub fn div(&mut self, a: f64, b: f64) -> f64 {
        self.round(a / b)
    }

    #[inline]
    pub fn sqrt(&mut self, a: f64) -> f64 {
        self.round(a.sqrt())
    }

    pub fn apply(&mut self, a: f64, b: f64, op: ArithOp) -> f64 {
        match op {
            ArithOp::Add => self.add(a, b),
            ArithOp::Sub => self.sub(a, b),
            ArithOp::Mul => self.mul(a, b),
            ArithOp::Div => self.div(a, b),
        }
    }

    pub fn round_complex(&mut self, z: Complex64) -> Complex64 {
        Complex64::new(self.round(z.re), self.round(z.im))
    }

    /// `a·b` with four rounded products and two rounded additions.
    #[inline]
    pub fn cmul(&mut self, a: Complex64, b: Complex64) -> Complex64 {
        let rr = self.mul(a.re, b.re);
        let ii = self.mul(a.im, b.im);
        let ri = self.mul(a.re, b.im);
        let ir = self.mul(a.im, b.re);
        Complex64::new(self.sub(rr, ii), self.add(ri, ir))
    }

    #[inline]
    pub fn cadd(&mut self, a: Complex64, b: Complex64) -> Complex64 {
        Complex64::new(self.add(a.re, b.re), self.add(a.im, b.im))
    }

    #[inline]
    pub fn csub(&mut self, a: Complex64, b: Complex64) -> Complex64 {
        Complex64::new(self.sub(a.re, b.re), self.sub(a.im, b.im))
    }

    /// `a / b`. A real divisor costs two rounded divisions; a complex one is
    /// evaluated as `a·conj(b) / |b|²` with every step rounded.
    pub fn cdiv(&mut self, a: Complex64, b: Complex64) -> Complex64 {
        if b.im == 0.0 {
            return Complex64::new(self.div(a.re, b.re), self.div(a.im, b.re));
        }
        let num = self.cmul(a, b.conj());
        let rr = self.mul(b.re, b.re);
        let ii = self.mul(b.im, b.im);
        let den = self.add(rr, ii);
        Complex64::new(self.div(num.re, den), self.div(num.im, den))
    }
}

fn check_finite(x: f64) -> Result<(), FpError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(FpError::NonFinite(x))
    }
}

/// Rounds a finite real into `fmt`.
pub fn round_to_format(
    x: f64,
    fmt: FloatFormat,
    mode: RoundingMode,
    range: RangeMode,
) -> Result<f64, FpError> {
    check_finite(x)?;
    Ok(Rounder::new(fmt, mode, range).round(x))
}

/// `fl(a op b)`: the exact carrier result rounded into `fmt`.
pub fn fl_op(
    a: f64,
    b: f64,
    op: ArithOp,
    fmt: FloatFormat,
    mode: RoundingMode,
    range: RangeMode,
) -> Result<f64, FpError> {
    check_finite(a)?;
    check_finite(b)?;
    if op == ArithOp::Div && b == 0.0 {
        return Err(FpError::DivisionByZero);
    }
    Ok(Rounder::new(fmt, mode, range).apply(a, b, op))
}

pub fn fl_cmul(
    a: Complex64,
    b: Complex64,
    fmt: FloatFormat,
    mode: RoundingMode,
    range: RangeMode,
) -> Result<Complex64, FpError> {
    for v in [a.re, a.im, b.re, b.im] {
        check_finite(v)?;
    }
    Ok(Rounder::new(fmt, mode, range).cmul(a, b))
}

pub fn fl_cadd(
    a: Complex64,
    b: Complex64,
    fmt: FloatFormat,
    mode: RoundingMode,
    range: RangeMode,
) -> Result<Complex64, FpError> {
    for v in [a.re, a.im, b.re, b.im] {
        check_finite(v)?;
    }
    Ok(Rounder::new(fmt, mode, range).cadd(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    const NE: RoundingMode = RoundingMode::NearestEven;
    const UNB: RangeMode = RangeMode::Unbounded;

    /// Nearest-even rounding by enumerating the two neighbouring grid points
    /// of the binade, without touching the bit representation.
    fn neighbor_oracle(x: f64, t: u32) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let a = x.abs();
        let mut e = 0i32;
        while 2f64.powi(e) > a {
            e -= 1;
        }
        while 2f64.powi(e + 1) <= a {
            e += 1;
        }
        let spacing = 2f64.powi(e - t as i32 + 1);
        let k = (a / spacing).floor();
        let lo = k * spacing;
        let hi = (k + 1.0) * spacing;
        let pick = if a - lo < hi - a {
            lo
        } else if a - lo > hi - a {
            hi
        } else if k % 2.0 == 0.0 {
            lo
        } else {
            hi
        };
        pick.copysign(x)
    }

    #[test]
    fn presets_match_reference_table() {
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert_eq!(FloatFormat::BFLOAT16.significand_bits(), 8);
        assert!(rel(FloatFormat::BFLOAT16.unit_roundoff(), 3.91e-3) < 5e-3);
        assert!(rel(FloatFormat::BFLOAT16.min_normal(), 1.18e-38) < 5e-3);
        assert!(rel(FloatFormat::BFLOAT16.max_finite(), 3.39e38) < 5e-3);
        assert_eq!(FloatFormat::FP16.significand_bits(), 11);
        assert!(rel(FloatFormat::FP16.unit_roundoff(), 4.88e-4) < 5e-3);
        assert!(rel(FloatFormat::FP16.min_normal(), 6.10e-5) < 5e-3);
        assert_eq!(FloatFormat::FP16.max_finite(), 65504.0);
        assert_eq!(FloatFormat::FP32.significand_bits(), 24);
        assert!(rel(FloatFormat::FP32.unit_roundoff(), 5.96e-8) < 5e-3);
        assert_eq!(FloatFormat::FP32.max_finite(), f32::MAX as f64);
        assert_eq!(FloatFormat::FP32.min_normal(), f32::MIN_POSITIVE as f64);
        assert_eq!(FloatFormat::FP64.significand_bits(), 53);
        assert_eq!(FloatFormat::FP64.unit_roundoff(), f64::EPSILON / 2.0);
        assert_eq!(FloatFormat::FP64.max_finite(), f64::MAX);
        for f in FloatFormat::PRESETS {
            let t = f.significand_bits() as i32;
            assert_eq!(f.unit_roundoff(), 0.5 * 2f64.powi(1 - t));
        }
    }

    #[test]
    fn format_lookup() {
        assert_eq!(FloatFormat::from_name("fp16").unwrap(), FloatFormat::FP16);
        assert_eq!(
            FloatFormat::from_name("BFloat16").unwrap(),
            FloatFormat::BFLOAT16
        );
        let c = FloatFormat::from_name("custom(10,-14,15)").unwrap();
        assert_eq!(c.significand_bits(), 10);
        assert_eq!(c.to_string(), "custom(10,-14,15)");
        assert_eq!(FloatFormat::from_name(&c.to_string()).unwrap(), c);
        assert!(matches!(
            FloatFormat::from_name("fp8"),
            Err(FpError::UnknownFormat(_))
        ));
        assert!(FloatFormat::custom(54, -10, 10).is_err());
        assert!(FloatFormat::custom(1, -10, 10).is_err());
        assert!(FloatFormat::custom(10, 5, 4).is_err());
    }

    #[test]
    fn round_examples() {
        let r = |x| round_to_format(x, FloatFormat::FP16, NE, UNB).unwrap();
        assert_eq!(r(1.0), 1.0);
        // 1 + 2^-12 lies between 1 and 1 + 2^-10, closer to 1
        assert_eq!(
            r(1.0 + 2f64.powi(-12)),
            neighbor_oracle(1.0 + 2f64.powi(-12), 11)
        );
        assert_eq!(r(1.0 + 2f64.powi(-12)), 1.0);
        // tie between 1 and 1 + 2^-10 goes to the even significand
        assert_eq!(r(1.0 + 2f64.powi(-11)), 1.0);
        assert_eq!(r(1.0 + 3.0 * 2f64.powi(-11)), 1.0 + 2.0 * 2f64.powi(-10));
        assert_eq!(r(-1.0 - 2f64.powi(-11)), -1.0);
        assert!(matches!(
            round_to_format(f64::NAN, FloatFormat::FP16, NE, UNB),
            Err(FpError::NonFinite(_))
        ));
        assert!(round_to_format(f64::INFINITY, FloatFormat::FP16, NE, UNB).is_err());
    }

    #[test]
    fn fl_op_examples() {
        let f = |a, b, op| fl_op(a, b, op, FloatFormat::FP16, NE, UNB).unwrap();
        assert_eq!(f(1.0, 1.0, ArithOp::Add), 2.0);
        assert_eq!(f(1.0, 2f64.powi(-11), ArithOp::Add), 1.0);
        assert_eq!(f(3.0, 2.0, ArithOp::Div), 1.5);
        assert_eq!(
            fl_op(1.0, 0.0, ArithOp::Div, FloatFormat::FP16, NE, UNB),
            Err(FpError::DivisionByZero)
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a: f64 = rng.random_range(-10.0..10.0);
            let b: f64 = rng.random_range(-10.0..10.0);
            for op in [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div] {
                let exact = match op {
                    ArithOp::Add => a + b,
                    ArithOp::Sub => a - b,
                    ArithOp::Mul => a * b,
                    ArithOp::Div => a / b,
                };
                let got = fl_op(a, b, op, FloatFormat::FP64, NE, UNB).unwrap();
                assert_eq!(got.to_bits(), exact.to_bits());
            }
        }
    }

    #[test]
    fn complex_examples() {
        let z = Complex64::new(0.375, -1.25);
        for f in FloatFormat::PRESETS {
            assert_eq!(fl_cmul(Complex64::new(1.0, 0.0), z, f, NE, UNB).unwrap(), z);
            assert_eq!(fl_cadd(z, Complex64::new(0.0, 0.0), f, NE, UNB).unwrap(), z);
        }
        let i = Complex64::new(0.0, 1.0);
        assert_eq!(
            fl_cmul(i, i, FloatFormat::FP16, NE, UNB).unwrap(),
            Complex64::new(-1.0, 0.0)
        );
        let w = fl_cadd(
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 2f64.powi(-11)),
            FloatFormat::FP16,
            NE,
            UNB,
        )
        .unwrap();
        assert_eq!(w, Complex64::new(1.0, 2f64.powi(-11)));
    }

    #[test]
    fn complex_multiply_error_bound() {
        let fmt = FloatFormat::FP16;
        let u = fmt.unit_roundoff();
        // probabilistic gamma_2 at lambda = 3 exceeds the worst case 2u + u^2
        let gamma2 = (3.0 * 2f64.sqrt() * u + 2.0 * u * u / (1.0 - u)).exp() - 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut r = Rounder::new(fmt, NE, UNB);
        for _ in 0..10_000 {
            let pa: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let pb: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let a = r.round_complex(Complex64::from_polar(1.0, pa));
            let b = r.round_complex(Complex64::from_polar(1.0, pb));
            let got = r.cmul(a, b);
            let exact = a * b;
            assert!((got - exact).norm() <= 2f64.sqrt() * gamma2 * a.norm() * b.norm());
        }
        // componentwise relative error of addition
        for _ in 0..10_000 {
            let a = r.round_complex(Complex64::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ));
            let b = r.round_complex(Complex64::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ));
            let got = r.cadd(a, b);
            let exact = a + b;
            assert!((got.re - exact.re).abs() <= u * exact.re.abs());
            assert!((got.im - exact.im).abs() <= u * exact.im.abs());
        }
    }

    #[test]
    fn standard_model_holds_for_every_format() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for fmt in FloatFormat::PRESETS {
            let u = fmt.unit_roundoff();
            let mut r = Rounder::new(fmt, NE, UNB);
            for _ in 0..1_000_000 {
                let a = r.round(rng.random_range(-1e3..1e3));
                let b = r.round(rng.random_range(-1e3..1e3));
                let exact = a * b;
                let got = r.mul(a, b);
                assert!((got - exact).abs() <= u * exact.abs());
                let exact = a + b;
                let got = r.add(a, b);
                assert!((got - exact).abs() <= u * exact.abs());
            }
        }
    }

    #[test]
    fn stochastic_rounding_is_unbiased() {
        let fmt = FloatFormat::FP16;
        let x = 1.0 + 0.3 * 2f64.powi(-10);
        let n = 100_000;
        let errs: Vec<f64> = (0..n)
            .map(|seed| {
                round_to_format(x, fmt, RoundingMode::Stochastic { seed }, UNB).unwrap() - x
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / n as f64;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let stderr = (var / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * stderr, "mean {mean} stderr {stderr}");
        for e in &errs {
            let v = x + e;
            assert!(v == 1.0 || v == 1.0 + 2f64.powi(-10));
        }
    }

    #[test]
    fn stochastic_rounding_keeps_representable_values() {
        let mut r = Rounder::new(
            FloatFormat::BFLOAT16,
            RoundingMode::Stochastic { seed: 9 },
            UNB,
        );
        for v in [1.0, -0.5, 3.0, 0.0078125, 1.5 * 2f64.powi(-100)] {
            for _ in 0..100 {
                assert_eq!(r.round(v), v);
            }
        }
    }

    #[test]
    fn strict_range_clamps_and_flushes() {
        let s = RangeMode::StrictIeee;
        let f = FloatFormat::FP16;
        assert_eq!(round_to_format(1e6, f, NE, s).unwrap(), 65504.0);
        assert_eq!(round_to_format(-1e6, f, NE, s).unwrap(), -65504.0);
        assert_eq!(round_to_format(1e-6, f, NE, s).unwrap(), 0.0);
        assert_eq!(
            round_to_format(6.2e-5, f, NE, s).unwrap(),
            neighbor_oracle(6.2e-5, 11)
        );
        assert_eq!(
            round_to_format(1e6, f, NE, UNB).unwrap(),
            neighbor_oracle(1e6, 11)
        );
        assert!(f.is_representable(65504.0));
        assert!(!f.is_representable(1e6));
        assert!(!f.is_representable(1e-6));
    }

    #[test]
    fn carrier_subnormals_round_relative() {
        let x = 3.3e-310;
        let got = round_to_format(x, FloatFormat::FP16, NE, UNB).unwrap();
        assert!((got - x).abs() <= FloatFormat::FP16.unit_roundoff() * x.abs());
    }

    proptest! {
        #[test]
        fn matches_neighbor_enumeration(x in -1e30f64..1e30, t in 2u32..=52) {
            let fmt = FloatFormat::custom(t, -1022, 1023).unwrap();
            let got = round_to_format(x, fmt, NE, UNB).unwrap();
            prop_assert_eq!(got, neighbor_oracle(x, t));
        }

        #[test]
        fn idempotent_and_bounded(x in -1e300f64..1e300, idx in 0usize..4) {
            let fmt = FloatFormat::PRESETS[idx];
            let once = round_to_format(x, fmt, NE, UNB).unwrap();
            let twice = round_to_format(once, fmt, NE, UNB).unwrap();
            prop_assert_eq!(once, twice);
            prop_assert!((once - x).abs() <= fmt.unit_roundoff() * x.abs());
        }

        #[test]
        fn monotone(x in -1e5f64..1e5, y in -1e5f64..1e5, idx in 0usize..4) {
            let fmt = FloatFormat::PRESETS[idx];
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            let rl = round_to_format(lo, fmt, NE, UNB).unwrap();
            let rh = round_to_format(hi, fmt, NE, UNB).unwrap();
            prop_assert!(rl <= rh);
        }

        #[test]
        fn stochastic_picks_a_neighbor(x in -1e10f64..1e10, seed in any::<u64>()) {
            let fmt = FloatFormat::FP16;
            let got = round_to_format(x, fmt, RoundingMode::Stochastic { seed }, UNB).unwrap();
            prop_assert!((got - x).abs() <= 2.0 * fmt.unit_roundoff() * x.abs());
            prop_assert!(fmt.has_exact_significand(got));
        }
    }
}
