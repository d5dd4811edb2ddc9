//! Text dump of a QP for offline cross-checking.
//!
//! Sections `[Q] rows cols` and `[A_EQ]`/`[A_IN]` hold `row col value`
//! triplets; `[C]`, `[B_EQ]` hold one value per line; `[IN_BOUNDS]` and
//! `[BOUNDS]` hold `lower upper` pairs; `[CONSTANT]` a single value.

use std::fmt::Write as _;

use gridstor_core::{CscMatrix, QpError, QpProblem};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error(transparent)]
    Qp(#[from] QpError),
}

fn matrix(s: &mut String, name: &str, m: &CscMatrix) {
    let _ = writeln!(s, "[{name}] {} {}", m.nrows(), m.ncols());
    for (r, c, v) in m.triplets() {
        let _ = writeln!(s, "{r} {c} {v}");
    }
}

fn vector(s: &mut String, name: &str, v: &[f64]) {
    let _ = writeln!(s, "[{name}] {}", v.len());
    for x in v {
        let _ = writeln!(s, "{x}");
    }
}

fn pairs(s: &mut String, name: &str, lo: &[f64], hi: &[f64]) {
    let _ = writeln!(s, "[{name}] {}", lo.len());
    for (l, u) in lo.iter().zip(hi) {
        let _ = writeln!(s, "{l} {u}");
    }
}

pub fn dump_qp(qp: &QpProblem) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[CONSTANT]\n{}", qp.constant);
    matrix(&mut s, "Q", &qp.q);
    vector(&mut s, "C", &qp.c);
    matrix(&mut s, "A_EQ", &qp.a_eq);
    vector(&mut s, "B_EQ", &qp.b_eq);
    matrix(&mut s, "A_IN", &qp.a_in);
    pairs(&mut s, "IN_BOUNDS", &qp.in_lower, &qp.in_upper);
    pairs(&mut s, "BOUNDS", &qp.lower, &qp.upper);
    s
}

struct Block {
    name: String,
    dims: Vec<usize>,
    rows: Vec<(usize, Vec<f64>)>,
}

pub fn read_qp(text: &str) -> Result<QpProblem, DumpError> {
    let mut blocks: Vec<Block> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let err = |msg: String| DumpError::Syntax { line: ln, msg };
        let body = raw.trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let (name, dims) = rest.split_once(']').ok_or_else(|| err("unclosed section".into()))?;
            let dims = dims
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| err(format!("bad size {t:?}"))))
                .collect::<Result<_, _>>()?;
            blocks.push(Block { name: name.into(), dims, rows: Vec::new() });
            continue;
        }
        let b = blocks.last_mut().ok_or_else(|| err("data before any section".into()))?;
        let vals = body
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(format!("bad number {t:?}"))))
            .collect::<Result<_, _>>()?;
        b.rows.push((ln, vals));
    }
    let find = |name: &str| {
        blocks.iter().find(|b| b.name == name).ok_or(DumpError::Syntax { line: 0, msg: format!("missing [{name}]") })
    };
    let width = |b: &Block, w: usize| -> Result<(), DumpError> {
        match b.rows.iter().find(|(_, v)| v.len() != w) {
            Some((line, _)) => Err(DumpError::Syntax { line: *line, msg: format!("expected {w} values") }),
            None => Ok(()),
        }
    };
    for b in &blocks {
        match b.name.as_str() {
            "Q" | "A_EQ" | "A_IN" => width(b, 3)?,
            "IN_BOUNDS" | "BOUNDS" => width(b, 2)?,
            "C" | "B_EQ" | "CONSTANT" => width(b, 1)?,
            other => return Err(DumpError::Syntax { line: 0, msg: format!("unknown section [{other}]") }),
        }
    }
    let dim = |b: &Block, k: usize| -> Result<usize, DumpError> {
        b.dims.get(k).copied().ok_or(DumpError::Syntax { line: 0, msg: format!("[{}] needs its size", b.name) })
    };
    let mat = |name: &str| -> Result<CscMatrix, DumpError> {
        let b = find(name)?;
        width(b, 3)?;
        let t: Vec<(usize, usize, f64)> = b.rows.iter().map(|(_, v)| (v[0] as usize, v[1] as usize, v[2])).collect();
        Ok(CscMatrix::from_triplets(dim(b, 0)?, dim(b, 1)?, &t)?)
    };
    let vec1 = |name: &str| -> Result<Vec<f64>, DumpError> {
        let b = find(name)?;
        width(b, 1)?;
        Ok(b.rows.iter().map(|(_, v)| v[0]).collect())
    };
    let vec2 = |name: &str| -> Result<(Vec<f64>, Vec<f64>), DumpError> {
        let b = find(name)?;
        width(b, 2)?;
        Ok(b.rows.iter().map(|(_, v)| (v[0], v[1])).unzip())
    };
    let constant = vec1("CONSTANT")?.first().copied().unwrap_or(0.0);
    let (in_lower, in_upper) = vec2("IN_BOUNDS")?;
    let (lower, upper) = vec2("BOUNDS")?;
    let qp = QpProblem {
        q: mat("Q")?,
        c: vec1("C")?,
        constant,
        a_eq: mat("A_EQ")?,
        b_eq: vec1("B_EQ")?,
        a_in: mat("A_IN")?,
        in_lower,
        in_upper,
        lower,
        upper,
    };
    qp.validate()?;
    Ok(qp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridstor_core::QpBuilder;

    #[test]
    fn round_trip() {
        let mut b = QpBuilder::new();
        let x = b.add_var(0.0, f64::INFINITY);
        let y = b.add_var(f64::NEG_INFINITY, 2.5);
        b.add_hessian(x, x, 2.0);
        b.add_hessian(x, y, 0.5);
        b.add_hessian(y, y, 1.0 / 3.0);
        b.add_linear(y, -1.0);
        b.add_constant(0.25);
        b.add_eq(&[(x, 1.0), (y, 1.0)], 1.0);
        b.add_ineq(&[(x, 1.0), (y, -1.0)], -1.0, f64::INFINITY);
        let qp = b.build().unwrap();
        assert_eq!(read_qp(&dump_qp(&qp)).unwrap(), qp);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let text = "[CONSTANT]\n0\n[Q] 1 1\n0 0\n";
        assert!(matches!(read_qp(text), Err(DumpError::Syntax { line: 4, .. })));
    }
}
