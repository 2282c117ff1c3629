//! Curve files and JSON encodings of multiprecision values.
//!
//! Floats are written as decimal strings so that high-precision values
//! survive a round trip. Curve files may use numbers or strings.

use rug::Complex;
use serde_json::{json, Value};

use crate::curve::CurveSpec;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::mp::{self, Prec};
use crate::partition::OrderedPartition;

/// Parsed curve file; values stay as strings until the precision is known.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveInput {
    pub n: usize,
    pub m: usize,
    pub lambdas: Vec<[String; 2]>,
    pub precision_bits: Option<u32>,
}

fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}

fn scalar_text(v: &Value) -> Result<String> {
    match v {
        Value::Number(x) => Ok(x.to_string()),
        Value::String(s) => Ok(s.trim().to_string()),
        _ => Err(input(format!("expected a number or decimal string, got {v}"))),
    }
}

fn uint(v: &Value, key: &str) -> Result<u64> {
    v.get(key)
        .ok_or_else(|| input(format!("missing field {key:?}")))?
        .as_u64()
        .ok_or_else(|| input(format!("field {key:?} must be a non-negative integer")))
}

/// {"N": int, "m": int, "lambdas": [[re, im], ...], "precision_bits": int}
pub fn parse_curve(text: &str) -> Result<CurveInput> {
    let v: Value = serde_json::from_str(text).map_err(|e| input(format!("curve JSON: {e}")))?;
    let n = uint(&v, "N")? as usize;
    let m = uint(&v, "m")? as usize;
    let precision_bits = match v.get("precision_bits") {
        None | Some(Value::Null) => None,
        Some(p) => Some(p.as_u64().filter(|&b| b <= u32::MAX as u64).ok_or_else(|| input("bad precision_bits"))? as u32),
    };
    let raw = v
        .get("lambdas")
        .and_then(Value::as_array)
        .ok_or_else(|| input("field \"lambdas\" must be an array"))?;
    let mut lambdas = Vec::with_capacity(raw.len());
    for item in raw {
        let pair = match item {
            Value::Array(xs) if xs.len() == 2 => [scalar_text(&xs[0])?, scalar_text(&xs[1])?],
            Value::Array(_) => return Err(input("each lambda must be [re, im]")),
            other => [scalar_text(other)?, "0".to_string()],
        };
        lambdas.push(pair);
    }
    Ok(CurveInput { n, m, lambdas, precision_bits })
}

impl CurveInput {
    pub fn from_spec(spec: &CurveSpec) -> Self {
        let digits = mp::digits_for(spec.prec());
        CurveInput {
            n: spec.n(),
            m: spec.m(),
            lambdas: spec.lambdas().iter().map(|l| mp::complex_to_strings(l, digits)).collect(),
            precision_bits: Some(spec.prec()),
        }
    }

    pub fn build(&self, prec: Prec) -> Result<CurveSpec> {
        let lams = self
            .lambdas
            .iter()
            .map(|[re, im]| mp::complex_from_strings(re, im, prec).map_err(|_| input(format!("bad number {re:?} / {im:?}"))))
            .collect::<Result<Vec<_>>>()?;
        CurveSpec::new(self.n, self.m, lams, prec)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "N": self.n,
            "m": self.m,
            "lambdas": self.lambdas,
            "precision_bits": self.precision_bits,
        })
    }
}

pub fn complex(z: &Complex, prec: Prec) -> Value {
    json!(mp::complex_to_strings(z, mp::digits_for(prec)))
}

pub fn complex_vec(v: &[Complex], prec: Prec) -> Value {
    Value::Array(v.iter().map(|z| complex(z, prec)).collect())
}

pub fn cmat(m: &CMat, prec: Prec) -> Value {
    Value::Array(m.iter().map(|r| complex_vec(r, prec)).collect())
}

/// Error estimates and other f64 diagnostics.
pub fn real(x: f64) -> Value {
    Value::String(format!("{x:.6e}"))
}

pub fn partition(pt: &OrderedPartition) -> Value {
    json!(pt.one_based())
}

/// Parses "1,2|3,4" (1-based blocks separated by '|').
pub fn parse_partition(s: &str) -> Result<OrderedPartition> {
    let blocks = s
        .split('|')
        .map(|b| {
            b.split(',')
                .map(|x| x.trim().parse::<usize>().map_err(|_| input(format!("bad partition {s:?}"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    OrderedPartition::from_one_based(&blocks).map_err(|e| input(e.to_string()))
}

/// Standard small instances regenerated by the fixtures mode.
pub fn standard_fixtures() -> Vec<(&'static str, usize, usize, Vec<(f64, f64)>)> {
    vec![
        ("n2m2", 2, 2, vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]),
        ("n3m1", 3, 1, vec![(0.0, 0.0), (1.0, 0.0), (2.0, 1.0)]),
        ("n2m3", 2, 3, vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.5), (5.0, -0.5)]),
    ]
}

pub fn fixture_curve(n: usize, m: usize, pts: &[(f64, f64)], prec: Prec) -> Result<CurveSpec> {
    CurveSpec::new(n, m, pts.iter().map(|&(x, y)| mp::c(prec, x, y)).collect(), prec)
}
