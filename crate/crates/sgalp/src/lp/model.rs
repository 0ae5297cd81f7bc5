//! Dense LP models of the form `max c·x  s.t.  A x ≤ b`, all variables free.
//!
//! Text interchange format (one record per line, `#` starts a comment):
//!
//! ```text
//! sgalp-lp 1
//! vars <n>
//! names <name_0> ... <name_{n-1}>        (optional)
//! max <c_0> ... <c_{n-1}>
//! row <standard|self-guiding> <rhs> <a_0> ... <a_{n-1}>
//! ...
//! end
//! ```
//!
//! Numbers are written in Rust's shortest round-trip form, so
//! `parse(write(m)) == m` bit for bit.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowTag {
    Standard,
    SelfGuiding,
}

impl RowTag {
    fn as_str(self) -> &'static str {
        match self {
            RowTag::Standard => "standard",
            RowTag::SelfGuiding => "self-guiding",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpModel {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    /// Row-major coefficients, `num_rows * num_vars` entries.
    pub coeffs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub tags: Vec<RowTag>,
    pub names: Vec<String>,
}

impl LpModel {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            num_vars: n,
            objective,
            coeffs: Vec::new(),
            rhs: Vec::new(),
            tags: Vec::new(),
            names: (0..n).map(|i| format!("x{i}")).collect(),
        }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.num_vars);
        self.names = names;
        self
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coeffs[i * self.num_vars..(i + 1) * self.num_vars]
    }

    pub fn push_row(&mut self, coeffs: &[f64], rhs: f64, tag: RowTag) -> Result<()> {
        if coeffs.len() != self.num_vars {
            return Err(Error::Dimension {
                expected: self.num_vars,
                got: coeffs.len(),
            });
        }
        if !rhs.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("non-finite LP row (rhs {rhs})")));
        }
        self.coeffs.extend_from_slice(coeffs);
        self.rhs.push(rhs);
        self.tags.push(tag);
        Ok(())
    }

    pub fn count(&self, tag: RowTag) -> usize {
        self.tags.iter().filter(|t| **t == tag).count()
    }

    /// `a_i·x − b_i` for every row.
    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_rows())
            .map(|i| self.row(i).iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - self.rhs[i])
            .collect()
    }

    /// Largest positive residual among rows with the given tag.
    pub fn max_violation(&self, x: &[f64], tag: RowTag) -> f64 {
        self.residuals(x)
            .into_iter()
            .zip(&self.tags)
            .filter(|(_, t)| **t == tag)
            .map(|(r, _)| r)
            .fold(0.0, f64::max)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("sgalp-lp 1\n");
        let _ = writeln!(out, "vars {}", self.num_vars);
        let _ = writeln!(out, "names {}", self.names.join(" "));
        out.push_str("max");
        for c in &self.objective {
            let _ = write!(out, " {c:?}");
        }
        out.push('\n');
        for i in 0..self.num_rows() {
            let _ = write!(out, "row {} {:?}", self.tags[i].as_str(), self.rhs[i]);
            for a in self.row(i) {
                let _ = write!(out, " {a:?}");
            }
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parameter(format!("lp text line {line}: {msg}"));
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, "sgalp-lp 1")) => {}
            Some((n, _)) => return Err(bad(n, "expected header `sgalp-lp 1`")),
            None => return Err(bad(0, "empty document")),
        }
        let num = |n: usize, tok: &str| {
            tok.parse::<f64>()
                .map_err(|_| bad(n, &format!("bad number `{tok}`")))
        };
        let (n_line, vars_line) = lines.next().ok_or_else(|| bad(0, "missing vars"))?;
        let num_vars: usize = vars_line
            .strip_prefix("vars ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(n_line, "expected `vars <n>`"))?;
        let mut model: Option<LpModel> = None;
        let mut names: Option<Vec<String>> = None;
        let mut ended = false;
        for (n, line) in lines {
            let mut toks = line.split_whitespace();
            match toks.next() {
                Some("names") => names = Some(toks.map(str::to_string).collect()),
                Some("max") => {
                    let obj = toks.map(|t| num(n, t)).collect::<Result<Vec<_>>>()?;
                    if obj.len() != num_vars {
                        return Err(bad(n, "objective length differs from vars"));
                    }
                    model = Some(LpModel::new(obj));
                }
                Some("row") => {
                    let m = model
                        .as_mut()
                        .ok_or_else(|| bad(n, "row before objective"))?;
                    let tag = match toks.next() {
                        Some("standard") => RowTag::Standard,
                        Some("self-guiding") => RowTag::SelfGuiding,
                        _ => return Err(bad(n, "unknown row tag")),
                    };
                    let rhs = num(n, toks.next().ok_or_else(|| bad(n, "missing rhs"))?)?;
                    let coeffs = toks.map(|t| num(n, t)).collect::<Result<Vec<_>>>()?;
                    m.push_row(&coeffs, rhs, tag)
                        .map_err(|e| bad(n, &e.to_string()))?;
                }
                Some("end") => {
                    ended = true;
                    break;
                }
                Some(other) => return Err(bad(n, &format!("unknown record `{other}`"))),
                None => {}
            }
        }
        if !ended {
            return Err(bad(0, "missing `end`"));
        }
        let mut model = model.ok_or_else(|| bad(0, "missing objective"))?;
        if let Some(names) = names {
            if names.len() != num_vars {
                return Err(bad(0, "names length differs from vars"));
            }
            model.names = names;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut m = LpModel::new(vec![1.0, 0.1 + 0.2, -3e-17]);
        m.push_row(&[0.1, 0.2, 0.3], 0.5, RowTag::Standard).unwrap();
        m.push_row(&[-1.0, -0.7, 1e300], -2.25, RowTag::SelfGuiding)
            .unwrap();
        let back = LpModel::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rejects_non_finite_rows() {
        let mut m = LpModel::new(vec![1.0]);
        assert!(m.push_row(&[f64::NAN], 1.0, RowTag::Standard).is_err());
        assert!(m.push_row(&[1.0, 2.0], 1.0, RowTag::Standard).is_err());
    }
}
