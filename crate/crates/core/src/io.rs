//! Serialization: versioned JSON documents for bases, tables, kernels, and
//! reports; dense CSV matrices; JSONL trace lines. Scalars travel as their
//! display strings, which parse back losslessly on every backend.

use num::BigRational;
use serde_json::{json, Value};

use crate::basis::{OrthoBasis, ProbabilityVector};
use crate::chains::{CompositionChain, SingleBallChain};
use crate::error::{Error, Result};
use crate::lancaster::BivariateTable;
use crate::poly::PolynomialTable;
use crate::scalar::{parse_rational, Scalar};

pub const SCHEMA: u32 = 1;

fn scalar_strings<S: Scalar>(row: &[S]) -> Vec<String> {
    row.iter().map(|v| v.to_string()).collect()
}

fn rational_strings(row: &[BigRational]) -> Vec<String> {
    row.iter().map(|v| v.to_string()).collect()
}

fn rational_from_value(v: &Value) -> Result<BigRational> {
    match v {
        Value::String(s) => parse_rational(s),
        Value::Number(n) => {
            let f = n
                .as_f64()
                .ok_or_else(|| Error::Parse(format!("bad numeric literal {n}")))?;
            BigRational::from_float(f)
                .ok_or_else(|| Error::Parse(format!("non-finite numeric literal {n}")))
        }
        other => Err(Error::Parse(format!("expected a number, got {other}"))),
    }
}

fn scalar_from_value<S: Scalar>(v: &Value) -> Result<S> {
    match v {
        Value::String(s) => S::parse(s),
        Value::Number(_) => Ok(S::from_rational(&rational_from_value(v)?)),
        other => Err(Error::Parse(format!("expected a scalar, got {other}"))),
    }
}

fn string_matrix<S: Scalar>(rows: &[Vec<S>]) -> Vec<Vec<String>> {
    rows.iter().map(|r| scalar_strings(r)).collect()
}

fn array_of<'a>(doc: &'a Value, field: &str) -> Result<&'a Vec<Value>> {
    doc.get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse(format!("missing or non-array field {field:?}")))
}

/// Basis document: `{schema, d, p, rows, weights}` with rational `p` and
/// backend scalars as strings.
pub fn basis_json<S: Scalar>(p: &ProbabilityVector, basis: &OrthoBasis<S>) -> Value {
    json!({
        "schema": SCHEMA,
        "d": p.d(),
        "p": rational_strings(p.as_slice()),
        "rows": string_matrix(basis.rows()),
        "weights": scalar_strings(basis.weights()),
    })
}

/// Read a basis document back; the same schema ingests character tables.
pub fn basis_from_json<S: Scalar>(doc: &Value) -> Result<(ProbabilityVector, OrthoBasis<S>)> {
    let p_vals = array_of(doc, "p")?
        .iter()
        .map(rational_from_value)
        .collect::<Result<Vec<_>>>()?;
    let p = ProbabilityVector::new(p_vals)?;
    let mut rows = Vec::new();
    for row in array_of(doc, "rows")? {
        let row = row
            .as_array()
            .ok_or_else(|| Error::Parse("basis row is not an array".into()))?;
        rows.push(
            row.iter()
                .map(scalar_from_value)
                .collect::<Result<Vec<S>>>()?,
        );
    }
    let weights = array_of(doc, "weights")?
        .iter()
        .map(scalar_from_value)
        .collect::<Result<Vec<S>>>()?;
    if rows.len() != p.d() || rows.iter().any(|r| r.len() != p.d()) || weights.len() != p.d() {
        return Err(Error::Dimension(
            "basis document dimensions are inconsistent".into(),
        ));
    }
    Ok((p, OrthoBasis::from_rows(rows, weights)))
}

fn label(parts: &[u32]) -> String {
    parts
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(":")
}

/// Polynomial table as CSV: one row per multi-index (graded order), one
/// column per composition (canonical order), `index` column first.
pub fn table_csv<S: Scalar>(table: &PolynomialTable<S>) -> String {
    let mut out = String::from("index");
    for x in table.states().iter() {
        out.push(',');
        out.push_str(&label(x));
    }
    out.push('\n');
    for r in 0..table.indices().len() {
        out.push_str(&label(table.indices().get(r)));
        for x in 0..table.states().len() {
            out.push(',');
            out.push_str(&table.value(r, x).to_string());
        }
        out.push('\n');
    }
    out
}

/// Polynomial table with metadata: values, norms, and the generating basis.
pub fn table_json<S: Scalar>(table: &PolynomialTable<S>, basis_id: &str, backend: &str) -> Value {
    json!({
        "schema": SCHEMA,
        "d": table.p().d(),
        "N": table.n_balls(),
        "p": rational_strings(table.p().as_slice()),
        "basis": basis_id,
        "backend": backend,
        "indices": (0..table.indices().len()).map(|r| table.indices().get(r).to_vec()).collect::<Vec<_>>(),
        "states": table.states().iter().cloned().collect::<Vec<_>>(),
        "values": (0..table.indices().len())
            .map(|r| (0..table.states().len()).map(|x| table.value(r, x).to_string()).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "norms": (0..table.indices().len()).map(|r| table.norm(r).to_string()).collect::<Vec<_>>(),
    })
}

/// Dense matrix as CSV, entries in display form.
pub fn matrix_csv<S: Scalar>(rows: &[Vec<S>]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&scalar_strings(row).join(","));
        out.push('\n');
    }
    out
}

/// Parse a dense CSV matrix of scalars (also ingests empirical contingency
/// tables). Rows must agree in length; blank lines are skipped.
pub fn matrix_from_csv<S: Scalar>(text: &str) -> Result<Vec<Vec<S>>> {
    let mut rows: Vec<Vec<S>> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| S::parse(cell.trim()))
            .collect::<Result<Vec<S>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse("ragged CSV matrix".into()));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty CSV matrix".into()));
    }
    Ok(rows)
}

/// Rescale a nonnegative matrix (e.g. an empirical contingency table) into a
/// joint distribution summing to one.
pub fn normalize_matrix<S: Scalar>(rows: &[Vec<S>]) -> Result<Vec<Vec<S>>> {
    let mut total = S::zero();
    for row in rows {
        for v in row {
            total = total + v.clone();
        }
    }
    let inv = total
        .invert()
        .map_err(|_| Error::Invalid("matrix has zero total mass".into()))?;
    Ok(rows
        .iter()
        .map(|row| row.iter().map(|v| v.mul_ref(&inv)).collect())
        .collect())
}

/// Single-ball chain document: kernel, stationary law, and eigen-data.
pub fn single_ball_json<S: Scalar>(chain: &SingleBallChain<S>) -> Value {
    json!({
        "schema": SCHEMA,
        "d": chain.d(),
        "p": rational_strings(chain.p.as_slice()),
        "kernel": string_matrix(&chain.kernel),
        "rho": scalar_strings(&chain.eigen.rho),
        "alpha": string_matrix(&chain.eigen.alpha),
        "beta": string_matrix(&chain.eigen.beta),
    })
}

/// Composition-chain document: states, kernel, and the eigenvalue attached
/// to each polynomial index.
pub fn composition_chain_json<S: Scalar>(chain: &CompositionChain<S>) -> Value {
    json!({
        "schema": SCHEMA,
        "d": chain.p.d(),
        "N": chain.n_balls,
        "p": rational_strings(chain.p.as_slice()),
        "states": chain.states.iter().cloned().collect::<Vec<_>>(),
        "indices": chain.indices.iter().cloned().collect::<Vec<_>>(),
        "kernel": string_matrix(&chain.kernel),
        "lambda": scalar_strings(&chain.lambda),
    })
}

/// Spectral report: one entry per index with its eigenvalue and the worst
/// right/left residual of the claimed diagonalization.
pub fn spectral_report_json<S: Scalar>(
    chain: &CompositionChain<S>,
    residuals: &[(f64, f64)],
) -> Value {
    let entries: Vec<Value> = (0..chain.indices.len())
        .map(|r| {
            json!({
                "n": chain.indices.get(r).to_vec(),
                "lambda": chain.lambda[r].to_string(),
                "residual": residuals[r].0.max(residuals[r].1),
            })
        })
        .collect();
    json!({
        "schema": SCHEMA,
        "entries": entries,
    })
}

/// One JSONL trace line.
pub fn trace_line(step: u64, state: &[u32]) -> String {
    json!({
        "schema": SCHEMA,
        "step": step,
        "state": state,
    })
    .to_string()
}

/// Bivariate table document: joint values plus the correlation sequence.
pub fn bivariate_json<S: Scalar>(
    joint: &BivariateTable<S>,
    table: &PolynomialTable<S>,
) -> Value {
    json!({
        "schema": SCHEMA,
        "d": table.p().d(),
        "N": joint.n_balls,
        "p": rational_strings(table.p().as_slice()),
        "states": table.states().iter().cloned().collect::<Vec<_>>(),
        "rho": scalar_strings(&joint.rho),
        "values": string_matrix(&joint.values),
    })
}
