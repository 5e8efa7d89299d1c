//! Fixed-point grids and the three rounding schemes shared by every
//! quantization path.
//!
//! Quantized values are carried as `f64` numbers that lie exactly on the
//! grid `n * 2^-frac_bits`, so the simulation code does not need to know
//! whether a parameter group is quantized. Raw integer codes are only used
//! by the model file codec ([`FixedPointFormat::to_code`]).
//!
//! Overflow saturates. Truncation floors toward negative infinity (two's
//! complement truncation) and round-to-nearest breaks ties away from zero.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widest grid accepted; keeps every code exactly representable in `f64`.
pub const MAX_TOTAL_BITS: u32 = 32;

/// Bit width charged for unquantized (`fp32`) parameters.
pub const FP32_BITS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedPointFormat {
    signed: bool,
    int_bits: u32,
    frac_bits: u32,
}

impl FixedPointFormat {
    pub fn new(signed: bool, int_bits: u32, frac_bits: u32) -> Result<Self> {
        let total = u32::from(signed) + int_bits + frac_bits;
        if total == 0 {
            return Err(Error::InvalidFormat("format has zero total width".into()));
        }
        if total > MAX_TOTAL_BITS {
            return Err(Error::InvalidFormat(format!(
                "total width {total} exceeds {MAX_TOTAL_BITS} bits"
            )));
        }
        Ok(Self {
            signed,
            int_bits,
            frac_bits,
        })
    }

    pub fn signed(&self) -> bool {
        self.signed
    }

    pub fn int_bits(&self) -> u32 {
        self.int_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn total_bits(&self) -> u32 {
        u32::from(self.signed) + self.int_bits + self.frac_bits
    }

    pub fn ulp(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    fn scale(&self) -> f64 {
        (self.frac_bits as f64).exp2()
    }

    fn min_code(&self) -> f64 {
        if self.signed {
            -((self.int_bits + self.frac_bits) as f64).exp2()
        } else {
            0.0
        }
    }

    fn max_code(&self) -> f64 {
        ((self.int_bits + self.frac_bits) as f64).exp2() - 1.0
    }

    pub fn min_val(&self) -> f64 {
        self.min_code() * self.ulp()
    }

    pub fn max_val(&self) -> f64 {
        self.max_code() * self.ulp()
    }

    /// Whether `x` is a representable grid point of this format.
    pub fn contains(&self, x: f64) -> bool {
        if !x.is_finite() || x < self.min_val() || x > self.max_val() {
            return false;
        }
        let scaled = x * self.scale();
        scaled == scaled.trunc()
    }

    /// Integer code of a grid value (`x = code * ulp`).
    pub fn to_code(&self, x: f64) -> Option<i64> {
        self.contains(x).then(|| (x * self.scale()) as i64)
    }

    /// Grid value of an integer code; `None` when the code is out of range.
    pub fn from_code(&self, code: i64) -> Option<f64> {
        let c = code as f64;
        (c >= self.min_code() && c <= self.max_code()).then(|| c * self.ulp())
    }
}

impl fmt::Display for FixedPointFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.signed { 's' } else { 'u' };
        write!(f, "q{s}{}.{}", self.int_bits, self.frac_bits)
    }
}

/// `(min_val, max_val, ulp)` of a format.
pub fn format_range(fmt: &FixedPointFormat) -> (f64, f64, f64) {
    (fmt.min_val(), fmt.max_val(), fmt.ulp())
}

/// Storage format of one parameter group: the fp32 reference or a
/// fixed-point grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ParamFormat {
    #[default]
    Fp32,
    Fixed(FixedPointFormat),
}

impl ParamFormat {
    pub fn bits(&self) -> u32 {
        match self {
            ParamFormat::Fp32 => FP32_BITS,
            ParamFormat::Fixed(f) => f.total_bits(),
        }
    }

    pub fn fixed(&self) -> Option<&FixedPointFormat> {
        match self {
            ParamFormat::Fp32 => None,
            ParamFormat::Fixed(f) => Some(f),
        }
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self, ParamFormat::Fixed(_))
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            ParamFormat::Fp32 => x.is_finite(),
            ParamFormat::Fixed(f) => f.contains(x),
        }
    }
}

impl fmt::Display for ParamFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamFormat::Fp32 => f.write_str("fp32"),
            ParamFormat::Fixed(q) => q.fmt(f),
        }
    }
}

impl FromStr for ParamFormat {
    type Err = Error;

    /// Parses `fp32` or `q<s|u><int_bits>.<frac_bits>`, e.g. `qs3.4`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "fp32" {
            return Ok(ParamFormat::Fp32);
        }
        let bad = || Error::InvalidFormat(format!("cannot parse {s:?}; expected fp32 or q<s|u><int>.<frac>"));
        let rest = s.strip_prefix('q').ok_or_else(bad)?;
        let signed = match rest.chars().next() {
            Some('s') => true,
            Some('u') => false,
            _ => return Err(bad()),
        };
        let (int, frac) = rest[1..].split_once('.').ok_or_else(bad)?;
        let digits = |t: &str| {
            if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
                Err(bad())
            } else {
                t.parse::<u32>().map_err(|_| bad())
            }
        };
        Ok(ParamFormat::Fixed(FixedPointFormat::new(
            signed,
            digits(int)?,
            digits(frac)?,
        )?))
    }
}

impl FromStr for FixedPointFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<ParamFormat>()? {
            ParamFormat::Fixed(f) => Ok(f),
            ParamFormat::Fp32 => Err(Error::InvalidFormat("fp32 is not a fixed-point format".into())),
        }
    }
}

impl Serialize for ParamFormat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParamFormat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoundingMode {
    Truncate,
    Nearest,
    Stochastic,
}

impl RoundingMode {
    pub const ALL: [RoundingMode; 3] = [
        RoundingMode::Truncate,
        RoundingMode::Nearest,
        RoundingMode::Stochastic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RoundingMode::Truncate => "truncate",
            RoundingMode::Nearest => "nearest",
            RoundingMode::Stochastic => "stochastic",
        }
    }
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoundingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "truncate" | "trunc" => Ok(RoundingMode::Truncate),
            "nearest" => Ok(RoundingMode::Nearest),
            "stochastic" => Ok(RoundingMode::Stochastic),
            other => Err(Error::InvalidParameter(format!("unknown rounding mode {other:?}"))),
        }
    }
}

impl Serialize for RoundingMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for RoundingMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Rounds `x` onto the grid of `fmt`, then saturates.
///
/// `rng` is only consulted (and only required) in [`RoundingMode::Stochastic`],
/// which draws one uniform variate per call.
pub fn quantize_value<R: Rng + ?Sized>(
    x: f64,
    fmt: &FixedPointFormat,
    mode: RoundingMode,
    rng: Option<&mut R>,
) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite { value: x });
    }
    let scaled = x * fmt.scale();
    let code = match mode {
        RoundingMode::Truncate => scaled.floor(),
        // f64::round breaks ties away from zero.
        RoundingMode::Nearest => scaled.round(),
        RoundingMode::Stochastic => {
            let rng = rng.ok_or(Error::MissingRng)?;
            let floor = scaled.floor();
            let p = scaled - floor;
            if rng.gen::<f64>() < p {
                floor + 1.0
            } else {
                floor
            }
        }
    };
    Ok(code.clamp(fmt.min_code(), fmt.max_code()) * fmt.ulp())
}

/// [`quantize_value`] for the deterministic modes; `Stochastic` fails with
/// [`Error::MissingRng`].
pub fn quantize_det(x: f64, fmt: &FixedPointFormat, mode: RoundingMode) -> Result<f64> {
    quantize_value(x, fmt, mode, None::<&mut rand_chacha::ChaCha8Rng>)
}

/// Elementwise [`quantize_value`]; stochastic draws are taken in index order.
pub fn quantize_tensor<R: Rng + ?Sized>(
    values: &[f64],
    fmt: &FixedPointFormat,
    mode: RoundingMode,
    mut rng: Option<&mut R>,
) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &x)| quantize_value(x, fmt, mode, rng.as_deref_mut()).map_err(|e| Error::at(i, e)))
        .collect()
}

/// In-place variant of [`quantize_tensor`].
pub fn quantize_slice<R: Rng + ?Sized>(
    values: &mut [f64],
    fmt: &FixedPointFormat,
    mode: RoundingMode,
    mut rng: Option<&mut R>,
) -> Result<()> {
    for (i, x) in values.iter_mut().enumerate() {
        *x = quantize_value(*x, fmt, mode, rng.as_deref_mut()).map_err(|e| Error::at(i, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(signed: bool, i: u32, f: u32) -> FixedPointFormat {
        FixedPointFormat::new(signed, i, f).unwrap()
    }

    #[test]
    fn ranges() {
        assert_eq!(format_range(&q(true, 0, 0)), (-1.0, 0.0, 1.0));
        assert_eq!(format_range(&q(false, 8, 0)), (0.0, 255.0, 1.0));
        assert_eq!(format_range(&q(true, 3, 4)), (-8.0, 7.9375, 0.0625));
    }

    #[test]
    fn zero_width_rejected() {
        assert!(FixedPointFormat::new(false, 0, 0).is_err());
        assert!(FixedPointFormat::new(true, 20, 20).is_err());
    }

    #[test]
    fn worked_values() {
        let f = q(true, 3, 4);
        assert_eq!(quantize_det(0.3, &f, RoundingMode::Truncate).unwrap(), 0.25);
        assert_eq!(quantize_det(0.3, &f, RoundingMode::Nearest).unwrap(), 0.3125);
        assert_eq!(quantize_det(10.0, &f, RoundingMode::Truncate).unwrap(), 7.9375);
        assert_eq!(quantize_det(-10.0, &f, RoundingMode::Nearest).unwrap(), -8.0);
        // floor toward -inf, not toward zero
        assert_eq!(quantize_det(-0.3, &f, RoundingMode::Truncate).unwrap(), -0.3125);
    }

    #[test]
    fn zero_is_fixed_for_every_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for f in [q(true, 0, 0), q(false, 8, 0), q(true, 3, 4), q(false, 0, 8)] {
            for m in RoundingMode::ALL {
                assert_eq!(quantize_value(0.0, &f, m, Some(&mut rng)).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn ties_go_away_from_zero() {
        let f = q(true, 3, 1);
        assert_eq!(quantize_det(0.25, &f, RoundingMode::Nearest).unwrap(), 0.5);
        assert_eq!(quantize_det(-0.25, &f, RoundingMode::Nearest).unwrap(), -0.5);
    }

    #[test]
    fn errors() {
        let f = q(true, 3, 4);
        assert!(matches!(
            quantize_det(f64::NAN, &f, RoundingMode::Nearest),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            quantize_det(0.3, &f, RoundingMode::Stochastic),
            Err(Error::MissingRng)
        ));
        let err = quantize_tensor(&[0.0, f64::INFINITY], &f, RoundingMode::Truncate, None::<&mut ChaCha8Rng>)
            .unwrap_err();
        assert!(matches!(err, Error::Element { index: 1, .. }));
    }

    #[test]
    fn tensor_examples() {
        let f = q(true, 3, 4);
        let none = None::<&mut ChaCha8Rng>;
        assert!(quantize_tensor(&[], &f, RoundingMode::Truncate, none).unwrap().is_empty());
        assert_eq!(
            quantize_tensor(&[0.25, -0.25], &f, RoundingMode::Nearest, None::<&mut ChaCha8Rng>).unwrap(),
            vec![0.25, -0.25]
        );
    }

    #[test]
    fn notation() {
        assert_eq!("fp32".parse::<ParamFormat>().unwrap(), ParamFormat::Fp32);
        assert_eq!(
            "qu0.8".parse::<ParamFormat>().unwrap(),
            ParamFormat::Fixed(q(false, 0, 8))
        );
        assert_eq!(q(true, 3, 4).to_string(), "qs3.4");
        for bad in ["q3.4", "qx1.2", "qs1", "qs.4", "qs1.-2", "fp16", "qu0.0"] {
            assert!(bad.parse::<ParamFormat>().is_err(), "{bad}");
        }
    }

    #[test]
    fn codes() {
        let f = q(false, 0, 8);
        assert_eq!(f.from_code(51), Some(0.19921875));
        assert_eq!(f.to_code(0.19921875), Some(51));
        assert_eq!(f.to_code(0.3), None);
        assert_eq!(f.from_code(256), None);
        let s = q(true, 3, 4);
        assert_eq!(s.to_code(-8.0), Some(-128));
    }
}
