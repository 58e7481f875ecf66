//! Tensor interchange format and report serialization.
//!
//! Tensors travel as `{"n_in": ..., "n_out": ..., "coeffs": [[[...]]]}`.
//! Entries may be JSON numbers or rational strings `"p/q"`. A tensor parses
//! in exact mode when every entry is a rational string or an integral
//! number; otherwise it parses as floats. Report JSON uses a fixed float
//! rendering (17 significant digits) so identical runs are byte-identical.

use crate::bilinear::BilinearMap;
use crate::error::{Error, Result};
use crate::scalar::{parse_rational, rational_to_string, Scalar};
use num_rational::BigRational;
use serde_json::Value;
use std::io::Write;

/// A parsed tensor, with the scalar mode chosen at parse time.
#[derive(Clone, Debug)]
pub enum ParsedMap {
    Exact(BilinearMap<BigRational>),
    Float(BilinearMap<f64>),
}

impl ParsedMap {
    pub fn to_float(&self) -> BilinearMap<f64> {
        match self {
            ParsedMap::Float(q) => q.clone(),
            ParsedMap::Exact(q) => q.map(|r| r.to_f64_lossy()),
        }
    }

    pub fn n_in(&self) -> usize {
        match self {
            ParsedMap::Float(q) => q.n_in(),
            ParsedMap::Exact(q) => q.n_in(),
        }
    }

    pub fn n_out(&self) -> usize {
        match self {
            ParsedMap::Float(q) => q.n_out(),
            ParsedMap::Exact(q) => q.n_out(),
        }
    }
}

fn usize_field(value: &Value, key: &str) -> Result<usize> {
    value
        .get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| Error::Schema {
            path: format!("$.{key}"),
            message: "expected a positive integer".into(),
        })
}

/// Parse the tensor JSON, choosing the scalar mode from the entries.
pub fn parse_map(value: &Value) -> Result<ParsedMap> {
    let n_in = usize_field(value, "n_in")?;
    let n_out = usize_field(value, "n_out")?;
    if n_in == 0 || n_out == 0 {
        return Err(Error::Schema {
            path: "$.n_in".into(),
            message: "dimensions must be positive".into(),
        });
    }
    let coeffs = value.get("coeffs").and_then(Value::as_array).ok_or_else(|| Error::Schema {
        path: "$.coeffs".into(),
        message: "expected a 3-level nested array".into(),
    })?;
    if coeffs.len() != n_out {
        return Err(Error::Schema {
            path: "$.coeffs".into(),
            message: format!("expected {} slices, found {}", n_out, coeffs.len()),
        });
    }

    let mut exact = Vec::with_capacity(n_out * n_in * n_in);
    let mut all_exact = true;
    let mut floats = Vec::with_capacity(n_out * n_in * n_in);
    for (i, slice) in coeffs.iter().enumerate() {
        let rows = slice.as_array().ok_or_else(|| Error::Schema {
            path: format!("$.coeffs[{i}]"),
            message: "expected an array of rows".into(),
        })?;
        if rows.len() != n_in {
            return Err(Error::Schema {
                path: format!("$.coeffs[{i}]"),
                message: format!("expected {} rows, found {}", n_in, rows.len()),
            });
        }
        for (j, row) in rows.iter().enumerate() {
            let entries = row.as_array().ok_or_else(|| Error::Schema {
                path: format!("$.coeffs[{i}][{j}]"),
                message: "expected an array of scalars".into(),
            })?;
            if entries.len() != n_in {
                return Err(Error::Schema {
                    path: format!("$.coeffs[{i}][{j}]"),
                    message: format!("expected {} entries, found {}", n_in, entries.len()),
                });
            }
            for (k, entry) in entries.iter().enumerate() {
                let path = || format!("$.coeffs[{i}][{j}][{k}]");
                match entry {
                    Value::String(text) => {
                        let r = parse_rational(text).ok_or_else(|| Error::Schema {
                            path: path(),
                            message: format!("invalid rational literal {text:?}"),
                        })?;
                        floats.push(r.to_f64_lossy());
                        exact.push(r);
                    }
                    Value::Number(num) => {
                        let f = num.as_f64().ok_or_else(|| Error::Schema {
                            path: path(),
                            message: "unrepresentable number".into(),
                        })?;
                        floats.push(f);
                        if all_exact && f.fract() == 0.0 && f.abs() <= 2f64.powi(53) {
                            exact.push(BigRational::from_i64(f as i64));
                        } else {
                            all_exact = false;
                        }
                    }
                    _ => {
                        return Err(Error::Schema {
                            path: path(),
                            message: "expected a number or rational string".into(),
                        })
                    }
                }
            }
        }
    }

    if all_exact {
        let mut iter = exact.into_iter();
        Ok(ParsedMap::Exact(BilinearMap::from_fn(n_in, n_out, |_, _, _| {
            iter.next().unwrap()
        })))
    } else {
        let mut iter = floats.into_iter();
        Ok(ParsedMap::Float(BilinearMap::from_fn(n_in, n_out, |_, _, _| {
            iter.next().unwrap()
        })))
    }
}

pub fn parse_map_str(text: &str) -> Result<ParsedMap> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Schema {
        path: "$".into(),
        message: format!("invalid JSON: {e}"),
    })?;
    parse_map(&value)
}

/// Serialize an exact tensor with string rationals.
pub fn exact_map_to_json(q: &BilinearMap<BigRational>) -> Value {
    let coeffs: Vec<Vec<Vec<Value>>> = (0..q.n_out())
        .map(|i| {
            (0..q.n_in())
                .map(|j| {
                    (0..q.n_in())
                        .map(|k| Value::String(rational_to_string(q.coeff(i, j, k))))
                        .collect()
                })
                .collect()
        })
        .collect();
    serde_json::json!({"n_in": q.n_in(), "n_out": q.n_out(), "coeffs": coeffs})
}

/// Serialize a float tensor with plain numbers.
pub fn float_map_to_json(q: &BilinearMap<f64>) -> Value {
    let coeffs: Vec<Vec<Vec<f64>>> = (0..q.n_out())
        .map(|i| {
            (0..q.n_in())
                .map(|j| (0..q.n_in()).map(|k| *q.coeff(i, j, k)).collect())
                .collect()
        })
        .collect();
    serde_json::json!({"n_in": q.n_in(), "n_out": q.n_out(), "coeffs": coeffs})
}

/// serde_json formatter that renders every float with 17 significant digits,
/// so report bytes are a pure function of the values.
struct FixedFloats;

impl serde_json::ser::Formatter for FixedFloats {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + Write,
    {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            // reports avoid non-finite floats; guard for safety
            write!(writer, "null")
        }
    }
}

/// Canonical single-line JSON bytes: declaration key order, fixed floats.
pub fn canonical_json_bytes(value: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloats);
    serde::Serialize::serialize(value, &mut ser).expect("serializing JSON value");
    out.push(b'\n');
    out
}

/// Fixed float rendering for CSV cells, matching the JSON formatter.
pub fn format_float(value: f64) -> String {
    if value.is_finite() {
        format!("{value:.16e}")
    } else {
        "nan".into()
    }
}
