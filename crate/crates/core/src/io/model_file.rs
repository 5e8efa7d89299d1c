//! Versioned text model files.
//!
//! ```text
//! tinysnn-model 1
//! inputs 784
//! excitatory 100
//! w_max 1
//! v_rest 0
//! ...                      (remaining layer parameters)
//! format.weights qu1.7
//! format.v_mem fp32
//! format.v_thresh fp32
//! lineage seed=7 train=5000
//! weights                  (one line per input, one value per neuron)
//! ...
//! v_mem
//! theta
//! refrac
//! end
//! ```
//!
//! Arrays of a quantized group are written as integer grid codes of the
//! group's format; fp32 arrays and scalar parameters as shortest
//! round-trip decimals, so a save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fixedpoint::ParamFormat;
use crate::network::{FormatTags, LayerParams, NetworkModel, NeuronDynamicState, WeightMatrix};

pub const MAGIC: &str = "tinysnn-model";
pub const VERSION: u32 = 1;

fn encode_value(out: &mut String, x: f64, fmt: &ParamFormat) {
    match fmt.fixed().and_then(|f| f.to_code(x)) {
        Some(code) => write!(out, "{code}").unwrap(),
        None => write!(out, "{x:?}").unwrap(),
    }
}

fn encode_row(out: &mut String, values: &[f64], fmt: &ParamFormat) {
    for (k, &x) in values.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        encode_value(out, x, fmt);
    }
    out.push('\n');
}

/// Text form of a model.
pub fn model_to_string(model: &NetworkModel) -> String {
    let p = &model.params;
    let f = &model.formats;
    let mut s = String::new();
    writeln!(s, "{MAGIC} {VERSION}").unwrap();
    writeln!(s, "inputs {}", model.num_inputs()).unwrap();
    writeln!(s, "excitatory {}", model.num_excitatory()).unwrap();
    for (k, v) in [
        ("w_max", model.w_max),
        ("v_rest", p.v_rest),
        ("v_reset", p.v_reset),
        ("v_thresh_base", p.v_thresh_base),
        ("tau_mem", p.tau_mem),
        ("theta_inc", p.theta_inc),
        ("tau_theta", p.tau_theta),
        ("w_inh", p.w_inh),
    ] {
        writeln!(s, "{k} {v:?}").unwrap();
    }
    writeln!(s, "t_refrac {}", p.t_refrac).unwrap();
    writeln!(s, "format.weights {}", f.weights).unwrap();
    writeln!(s, "format.v_mem {}", f.v_mem).unwrap();
    writeln!(s, "format.v_thresh {}", f.v_thresh).unwrap();
    writeln!(s, "lineage {}", model.lineage.replace('\n', " ")).unwrap();
    s.push_str("weights\n");
    for i in 0..model.num_inputs() {
        encode_row(&mut s, model.weights.row(i), &f.weights);
    }
    s.push_str("v_mem\n");
    let v: Vec<f64> = model.states.iter().map(|x| x.v_mem).collect();
    encode_row(&mut s, &v, &f.v_mem);
    s.push_str("theta\n");
    let th: Vec<f64> = model.states.iter().map(|x| x.theta).collect();
    encode_row(&mut s, &th, &f.v_thresh);
    s.push_str("refrac\n");
    let r: Vec<String> = model.states.iter().map(|x| x.refrac_remaining.to_string()).collect();
    s.push_str(&r.join(" "));
    s.push_str("\nend\n");
    s
}

pub fn save_model(model: &NetworkModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkModel> {
    model_from_str(&fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::ModelFormat {
            line: self.line,
            message: message.into(),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ if l == key => Ok(""),
            _ => Err(self.err(format!("expected `{key}`, found {l:?}"))),
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.keyed(key)?;
        v.trim()
            .parse()
            .map_err(|_| self.err(format!("cannot parse value of `{key}`: {v:?}")))
    }

    fn format(&mut self, key: &str) -> Result<ParamFormat> {
        let v = self.keyed(key)?;
        v.parse().map_err(|e: Error| self.err(e.to_string()))
    }

    fn section(&mut self, name: &str) -> Result<()> {
        let l = self.next()?;
        if l.trim() != name {
            return Err(self.err(format!("expected section `{name}`, found {l:?}")));
        }
        Ok(())
    }

    fn row(&mut self, len: usize, fmt: &ParamFormat) -> Result<Vec<f64>> {
        let l = self.next()?;
        let vals = l
            .split_ascii_whitespace()
            .map(|tok| decode_value(tok, fmt).ok_or_else(|| self.err(format!("bad value {tok:?} for {fmt}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != len {
            return Err(self.err(format!("expected {len} values, found {}", vals.len())));
        }
        Ok(vals)
    }
}

fn decode_value(tok: &str, fmt: &ParamFormat) -> Option<f64> {
    match fmt {
        ParamFormat::Fixed(f) => f.from_code(tok.parse().ok()?),
        ParamFormat::Fp32 => tok.parse::<f64>().ok().filter(|x| x.is_finite()),
    }
}

pub fn model_from_str(text: &str) -> Result<NetworkModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let head = lines.next()?;
    let version = head
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| lines.err(format!("not a model file (expected `{MAGIC}` header)")))?;
    if version != VERSION.to_string() {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            found: version.to_string(),
        });
    }
    let inputs: usize = lines.parse("inputs")?;
    let excitatory: usize = lines.parse("excitatory")?;
    let w_max: f64 = lines.parse("w_max")?;
    let params = LayerParams {
        v_rest: lines.parse("v_rest")?,
        v_reset: lines.parse("v_reset")?,
        v_thresh_base: lines.parse("v_thresh_base")?,
        tau_mem: lines.parse("tau_mem")?,
        theta_inc: lines.parse("theta_inc")?,
        tau_theta: lines.parse("tau_theta")?,
        w_inh: lines.parse("w_inh")?,
        t_refrac: lines.parse("t_refrac")?,
    };
    let formats = FormatTags {
        weights: lines.format("format.weights")?,
        v_mem: lines.format("format.v_mem")?,
        v_thresh: lines.format("format.v_thresh")?,
    };
    let lineage = lines.keyed("lineage")?.to_string();
    lines.section("weights")?;
    let mut data = Vec::with_capacity(inputs * excitatory);
    for _ in 0..inputs {
        data.extend(lines.row(excitatory, &formats.weights)?);
    }
    lines.section("v_mem")?;
    let v = lines.row(excitatory, &formats.v_mem)?;
    lines.section("theta")?;
    let th = lines.row(excitatory, &formats.v_thresh)?;
    lines.section("refrac")?;
    let refrac_line = lines.next()?;
    let refrac = refrac_line
        .split_ascii_whitespace()
        .map(|t| t.parse::<u32>().map_err(|_| lines.err(format!("bad refractory count {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if refrac.len() != excitatory {
        return Err(lines.err(format!("expected {excitatory} refractory counts, found {}", refrac.len())));
    }
    lines.section("end")?;

    let weights = WeightMatrix::from_vec(inputs, excitatory, data)?;
    let mut model = NetworkModel::with_weights(weights, w_max, params)?;
    model.formats = formats;
    model.lineage = lineage;
    for (j, s) in model.states.iter_mut().enumerate() {
        *s = NeuronDynamicState {
            v_mem: v[j],
            theta: th[j],
            refrac_remaining: refrac[j],
        };
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::FixedPointFormat;

    fn model() -> NetworkModel {
        let w = WeightMatrix::from_vec(2, 3, vec![0.1, 0.2, 1.0 / 3.0, 0.0, 1.0, 1e-300]).unwrap();
        let mut m = NetworkModel::with_weights(w, 1.0, LayerParams::default()).unwrap();
        m.states[1].theta = 0.123456789;
        m.states[2].refrac_remaining = 3;
        m.lineage = "seed=1".into();
        m
    }

    #[test]
    fn fp32_round_trip_is_exact() {
        let m = model();
        let back = model_from_str(&model_to_string(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn quantized_weights_are_codes() {
        let f = FixedPointFormat::new(false, 0, 8).unwrap();
        let w = WeightMatrix::from_vec(1, 2, vec![51.0 / 256.0, 0.5]).unwrap();
        let mut m = NetworkModel::with_weights(w, 1.0, LayerParams::default()).unwrap();
        m.formats.weights = ParamFormat::Fixed(f);
        let text = model_to_string(&m);
        assert!(text.contains("\nweights\n51 128\n"), "{text}");
        let back = model_from_str(&text).unwrap();
        assert_eq!(back.weights.get(0, 0), 0.19921875);
        assert_eq!(back, m);
    }

    #[test]
    fn version_mismatch() {
        let text = model_to_string(&model()).replacen("tinysnn-model 1", "tinysnn-model 9", 1);
        match model_from_str(&text) {
            Err(Error::VersionMismatch { expected: 1, found }) => assert_eq!(found, "9"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_rows_are_reported_with_line() {
        let text = model_to_string(&model()).replace("\nweights\n", "\nweights\n0.5 ");
        assert!(matches!(model_from_str(&text), Err(Error::ModelFormat { .. })));
        assert!(model_from_str("garbage").is_err());
    }
}
