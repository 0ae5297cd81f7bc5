//! Solver backends for [`LpModel`].
//!
//! [`SimplexBackend`] wraps the `microlp` dual simplex with two additions that
//! the random-feature LPs need:
//!
//! * column preconditioning: the constraint matrix is factored `A = QR` and the
//!   LP is solved in `z = Rx`. Random Fourier columns with small frequencies
//!   are nearly collinear, and the orthonormal `Q` keeps the simplex well
//!   scaled. All variables are free, so the change of variables is exact.
//! * column screening: a column whose component orthogonal to the earlier
//!   columns of the standard-row block is below `screen_tol` of its own norm
//!   is numerically redundant; its weight is fixed at zero. The block is
//!   factored without pivoting, so the decision for column j depends only on
//!   columns 1..=j and stays stable when bases are appended.
//! * columns that appear in no row are fixed at zero (an error if they carry
//!   objective weight).
//! * a singular simplex basis is retried with a coarser screen, and an
//!   infeasible verdict with the plain formulation, before either is reported.
//! * row generation: large models are solved on a subset of rows that grows
//!   with the most violated remaining rows until every row holds.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolutionStatus, SolveOutcome};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{LpModel, RowTag};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolverError {
    #[error("infeasible")]
    Infeasible,
    #[error("unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    Numeric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Row tolerance used by the backend: `feas_tol * (1 + |b_i|)`.
    pub feas_tol: f64,
    pub max_violation_standard: f64,
    pub max_violation_self_guiding: f64,
    pub rows_in_final_subproblem: usize,
    pub rounds: usize,
    pub preconditioned: bool,
    /// Variables fixed at zero by column screening.
    #[serde(default)]
    pub screened: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub report: FeasibilityReport,
}

pub trait SolverBackend: Sync {
    fn name(&self) -> String;
    fn solve(&self, model: &LpModel) -> Result<LpSolution, SolverError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimplexBackend {
    pub precondition: bool,
    /// Models with more rows than this are solved by row generation.
    pub row_generation_threshold: usize,
    pub initial_rows: usize,
    pub rows_per_round: usize,
    pub max_rounds: usize,
    pub feas_tol: f64,
    /// Relative residual below which a column is screened out; 0 disables.
    pub screen_tol: f64,
    /// Ratio min|R_ii| / max|R_ii| below which the factorization is treated
    /// as rank deficient and the model is solved unpreconditioned.
    pub rank_tol: f64,
    /// Wall-clock limit per simplex call in seconds; 0 disables. A guard
    /// against stalls, reported as a numerical failure.
    pub time_limit_s: f64,
}

impl Default for SimplexBackend {
    fn default() -> Self {
        Self {
            precondition: true,
            row_generation_threshold: 1500,
            initial_rows: 600,
            rows_per_round: 150,
            max_rounds: 400,
            feas_tol: 1e-9,
            screen_tol: SCREEN_TOL,
            rank_tol: 1e-15,
            time_limit_s: 120.0,
        }
    }
}

pub const SCREEN_TOL: f64 = 1e-8;

struct Transformed {
    /// Model columns kept in the working problem, in order.
    cols: Vec<usize>,
    /// Row-major `m x n` matrix in the working coordinates.
    rows: Vec<f64>,
    objective: Vec<f64>,
    /// Upper-triangular R (column-major n x n) when preconditioned.
    r: Option<DMatrix<f64>>,
}

impl SimplexBackend {
    /// Columns that survive screening on the standard-row block.
    fn screen(&self, model: &LpModel) -> Vec<usize> {
        let n = model.num_vars;
        let std_rows: Vec<usize> = (0..model.num_rows())
            .filter(|i| model.tags[*i] == RowTag::Standard)
            .collect();
        if self.screen_tol <= 0.0 || std_rows.len() < n {
            return (0..n).collect();
        }
        let mut block = Vec::with_capacity(std_rows.len() * n);
        for &i in &std_rows {
            block.extend_from_slice(model.row(i));
        }
        let a = DMatrix::from_row_slice(std_rows.len(), n, &block);
        let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
        let r = a.qr().r();
        // columns absent from the standard block are left to the other rows
        (0..n)
            .filter(|&j| norms[j] == 0.0 || r[(j, j)].abs() > self.screen_tol * norms[j])
            .collect()
    }

    fn transform(&self, model: &LpModel) -> Transformed {
        let m = model.num_rows();
        let cols = if self.precondition {
            self.screen(model)
        } else {
            (0..model.num_vars).collect()
        };
        // a column absent from every row is fixed at zero
        let cols: Vec<usize> = cols
            .into_iter()
            .filter(|&j| (0..m).any(|i| model.row(i)[j] != 0.0))
            .collect();
        let k = cols.len();
        let mut reduced = Vec::with_capacity(m * k);
        for i in 0..m {
            let row = model.row(i);
            reduced.extend(cols.iter().map(|&j| row[j]));
        }
        let objective: Vec<f64> = cols.iter().map(|&j| model.objective[j]).collect();
        if self.precondition && m >= k && k > 0 {
            let a = DMatrix::from_row_slice(m, k, &reduced);
            let qr = a.qr();
            let r = qr.r();
            let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
            let dmax = diag.iter().cloned().fold(0.0, f64::max);
            let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            if dmax > 0.0 && dmin > self.rank_tol * dmax {
                let q = qr.q();
                let mut rows = Vec::with_capacity(m * k);
                for i in 0..m {
                    for j in 0..k {
                        rows.push(q[(i, j)]);
                    }
                }
                // c = R^T c~  =>  c~ = R^{-T} c
                let c = nalgebra::DVector::from_column_slice(&objective);
                let ct = r
                    .transpose()
                    .solve_lower_triangular(&c)
                    .expect("nonsingular R");
                return Transformed {
                    cols,
                    rows,
                    objective: ct.iter().cloned().collect(),
                    r: Some(r),
                };
            }
        }
        Transformed {
            cols,
            rows: reduced,
            objective,
            r: None,
        }
    }

    fn solve_subset(
        &self,
        t: &Transformed,
        rhs: &[f64],
        n: usize,
        subset: &[usize],
    ) -> Result<(Vec<f64>, f64), SolverError> {
        let mut problem = Problem::new(OptimizationDirection::Maximize);
        if self.time_limit_s > 0.0 {
            problem.set_time_limit(std::time::Duration::from_secs_f64(self.time_limit_s));
        }
        let vars: Vec<_> = t
            .objective
            .iter()
            .map(|c| problem.add_var(*c, (f64::NEG_INFINITY, f64::INFINITY)))
            .collect();
        for &i in subset {
            let row = &t.rows[i * n..(i + 1) * n];
            let expr: Vec<_> = vars
                .iter()
                .zip(row)
                .filter(|(_, a)| **a != 0.0)
                .map(|(v, a)| (*v, *a))
                .collect();
            problem.add_constraint(expr.as_slice(), ComparisonOp::Le, rhs[i]);
        }
        match problem.solve() {
            Ok(SolveOutcome::Solution(sol)) if sol.status() != SolutionStatus::Optimal => Err(
                SolverError::Numeric("time limit reached before optimality".into()),
            ),
            Ok(SolveOutcome::Solution(sol)) => {
                let z: Vec<f64> = vars.iter().map(|v| sol.var_value(*v)).collect();
                Ok((z, sol.objective()))
            }
            Ok(SolveOutcome::Interrupted(_)) => {
                Err(SolverError::Numeric("solve interrupted".into()))
            }
            Err(microlp::Error::Infeasible) => Err(SolverError::Infeasible),
            Err(microlp::Error::Unbounded) => Err(SolverError::Unbounded),
            Err(e) => Err(SolverError::Numeric(e.to_string())),
        }
    }

    fn initial_subset(&self, m: usize, size: usize) -> Vec<usize> {
        if size >= m {
            return (0..m).collect();
        }
        let mut out: Vec<usize> = (0..size).map(|k| k * m / size).collect();
        out.dedup();
        out
    }
}

impl SolverBackend for SimplexBackend {
    fn name(&self) -> String {
        format!(
            "microlp-0.6/dual-simplex{}",
            if self.precondition { "+qr" } else { "" }
        )
    }

    /// An infeasible verdict is rechecked without screening, then without
    /// preconditioning: thin feasible regions (self-guiding rows with a tiny
    /// shift) can be lost to the transformed problem's rounding.
    fn solve(&self, model: &LpModel) -> Result<LpSolution, SolverError> {
        let mut result = self.solve_once(model);
        for factor in [1e2, 1e3] {
            if matches!(&result, Err(SolverError::Numeric(m)) if m.contains("ingular"))
                && self.precondition
                && self.screen_tol > 0.0
            {
                result = SimplexBackend {
                    screen_tol: self.screen_tol * factor,
                    ..self.clone()
                }
                .solve_once(model);
            }
        }
        if result == Err(SolverError::Infeasible) && self.precondition && self.screen_tol > 0.0 {
            result = SimplexBackend {
                screen_tol: 0.0,
                ..self.clone()
            }
            .solve_once(model);
        }
        if result == Err(SolverError::Infeasible) && self.precondition {
            result = SimplexBackend {
                precondition: false,
                ..self.clone()
            }
            .solve_once(model);
        }
        result
    }
}

impl SimplexBackend {
    fn solve_once(&self, model: &LpModel) -> Result<LpSolution, SolverError> {
        let (m, n) = (model.num_rows(), model.num_vars);
        if n == 0 {
            return Err(SolverError::Numeric("model has no variables".into()));
        }
        if m == 0 {
            if model.objective.iter().all(|c| *c == 0.0) {
                return Ok(finish(
                    model,
                    vec![0.0; n],
                    0,
                    0,
                    false,
                    self.feas_tol,
                    Vec::new(),
                ));
            }
            return Err(SolverError::Unbounded);
        }
        if (0..n).any(|j| model.objective[j] != 0.0 && (0..m).all(|i| model.row(i)[j] == 0.0)) {
            return Err(SolverError::Unbounded);
        }
        let t = self.transform(model);
        let k = t.cols.len();
        if k == 0 {
            return Err(SolverError::Numeric("every column was screened out".into()));
        }
        let tol: Vec<f64> = model
            .rhs
            .iter()
            .map(|b| self.feas_tol * (1.0 + b.abs()))
            .collect();

        let mut in_subset = vec![false; m];
        let mut subset = if m > self.row_generation_threshold {
            self.initial_subset(m, self.initial_rows.max(2 * n))
        } else {
            (0..m).collect()
        };
        for &i in &subset {
            in_subset[i] = true;
        }
        let mut rounds = 0;
        let z = loop {
            rounds += 1;
            if rounds > self.max_rounds {
                return Err(SolverError::Numeric(format!(
                    "row generation did not converge in {} rounds",
                    self.max_rounds
                )));
            }
            match self.solve_subset(&t, &model.rhs, k, &subset) {
                Err(SolverError::Unbounded) if subset.len() < m => {
                    // grow the subset by striding over the rows not yet used
                    let missing: Vec<usize> = (0..m).filter(|i| !in_subset[*i]).collect();
                    let take = subset.len().max(1).min(missing.len());
                    for k in 0..take {
                        let i = missing[k * missing.len() / take];
                        if !in_subset[i] {
                            in_subset[i] = true;
                            subset.push(i);
                        }
                    }
                    continue;
                }
                Err(e) => return Err(e),
                Ok((z, _)) => {
                    if subset.len() == m {
                        break z;
                    }
                    let mut violated: Vec<(f64, usize)> = (0..m)
                        .filter(|i| !in_subset[*i])
                        .filter_map(|i| {
                            let row = &t.rows[i * k..(i + 1) * k];
                            let r =
                                row.iter().zip(&z).map(|(a, v)| a * v).sum::<f64>() - model.rhs[i];
                            (r > tol[i]).then_some((r / (1.0 + model.rhs[i].abs()), i))
                        })
                        .collect();
                    if violated.is_empty() {
                        break z;
                    }
                    violated.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                    for (_, i) in violated.into_iter().take(self.rows_per_round) {
                        in_subset[i] = true;
                        subset.push(i);
                    }
                }
            }
        };
        let xk: Vec<f64> = match &t.r {
            Some(r) => {
                let zv = nalgebra::DVector::from_column_slice(&z);
                r.solve_upper_triangular(&zv)
                    .ok_or_else(|| SolverError::Numeric("singular R in back substitution".into()))?
                    .iter()
                    .cloned()
                    .collect()
            }
            None => z,
        };
        if xk.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Numeric("non-finite solution".into()));
        }
        let mut x = vec![0.0; n];
        for (j, v) in t.cols.iter().zip(xk) {
            x[*j] = v;
        }
        let screened: Vec<usize> = (0..n).filter(|j| !t.cols.contains(j)).collect();
        Ok(finish(
            model,
            x,
            subset.len(),
            rounds,
            t.r.is_some(),
            self.feas_tol,
            screened,
        ))
    }
}

fn finish(
    model: &LpModel,
    x: Vec<f64>,
    used: usize,
    rounds: usize,
    pre: bool,
    feas_tol: f64,
    screened: Vec<usize>,
) -> LpSolution {
    let report = FeasibilityReport {
        feas_tol,
        max_violation_standard: model.max_violation(&x, RowTag::Standard),
        max_violation_self_guiding: model.max_violation(&x, RowTag::SelfGuiding),
        rows_in_final_subproblem: used,
        rounds,
        preconditioned: pre,
        screened,
    };
    LpSolution {
        status: LpStatus::Optimal,
        objective: model.objective_value(&x),
        x,
        report,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row() {
        let mut m = LpModel::new(vec![1.0]);
        m.push_row(&[1.0], 1.0, RowTag::Standard).unwrap();
        let s = SimplexBackend::default().solve(&m).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_rows_is_unbounded() {
        let m = LpModel::new(vec![1.0, 0.0]);
        assert_eq!(
            SimplexBackend::default().solve(&m),
            Err(SolverError::Unbounded)
        );
    }

    #[test]
    fn infeasible_detected() {
        let mut m = LpModel::new(vec![1.0]);
        m.push_row(&[1.0], -1.0, RowTag::Standard).unwrap();
        m.push_row(&[-1.0], -1.0, RowTag::Standard).unwrap();
        for pre in [true, false] {
            let b = SimplexBackend {
                precondition: pre,
                ..Default::default()
            };
            assert_eq!(b.solve(&m), Err(SolverError::Infeasible));
        }
    }

    #[test]
    fn row_generation_matches_full_solve() {
        // max x + y over many tangent cuts of the unit disc
        let mut m = LpModel::new(vec![1.0, 2.0]);
        for k in 0..5000 {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 5000.0;
            m.push_row(&[t.cos(), t.sin()], 1.0, RowTag::Standard)
                .unwrap();
        }
        let full = SimplexBackend {
            row_generation_threshold: usize::MAX,
            ..Default::default()
        }
        .solve(&m)
        .unwrap();
        let gen = SimplexBackend {
            initial_rows: 8,
            rows_per_round: 4,
            ..Default::default()
        }
        .solve(&m)
        .unwrap();
        assert!((full.objective - gen.objective).abs() < 1e-8);
        assert!(gen.report.max_violation_standard < 1e-8);
        assert!(gen.report.rounds > 1);
    }
}
