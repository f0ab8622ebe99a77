//! Solver-agnostic conic-program representation and solving contract.
//!
//! A program holds a linear objective, equality rows, cone constraints, and
//! an optional variable box. A cone constraint states that the slack vector
//! `s = rhs − A·x` belongs to the given cone, one slack entry per row.
//!
//! Cones follow the usual definitions:
//! `K_exp = {x : x1 ≥ x2·exp(x3/x2), x1, x2 ≥ 0}` (with the closure
//! `{x1 ≥ 0, x2 = 0, x3 ≤ 0}` on the boundary),
//! `Q^n = {x : x1 ≥ ‖x_{2:}‖}`, and
//! `Q_r^n = {x : 2 x1 x2 ≥ Σ_{j≥3} x_j², x1, x2 ≥ 0}`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, ExponentialConeT, IPSolver, NonnegativeConeT,
    SecondOrderConeT, SolverStatus, SupportedConeT, ZeroConeT,
};

pub const DEFAULT_FEAS_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum ConicError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("point has {got} entries, program has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("solver setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeSpec {
    /// Componentwise nonnegative slack: each row states `a·x ≤ rhs`.
    NonNeg(usize),
    /// Second-order cone of the given dimension.
    Quad(usize),
    /// Rotated second-order cone of the given dimension.
    RotQuad(usize),
    /// Three-dimensional exponential cone.
    Exp,
}

impl ConeSpec {
    pub fn dim(&self) -> usize {
        match self {
            ConeSpec::NonNeg(d) | ConeSpec::Quad(d) | ConeSpec::RotQuad(d) => *d,
            ConeSpec::Exp => 3,
        }
    }
}

/// One affine row `Σ coeffs·x` compared against `rhs`.
#[derive(Debug, Clone, Default)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    /// Row that pins the slack entry to a single variable.
    pub fn of_var(var: usize) -> Self {
        Self {
            coeffs: vec![(var, -1.0)],
            rhs: 0.0,
        }
    }

    /// Row with a constant slack entry.
    pub fn constant(value: f64) -> Self {
        Self {
            coeffs: Vec::new(),
            rhs: value,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Slack value `rhs − a·x`.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.rhs - self.eval(x)
    }

    fn scale_hint(&self, x: &[f64]) -> f64 {
        let term_max = self
            .coeffs
            .iter()
            .map(|&(j, a)| (a * x[j]).abs())
            .fold(0.0f64, f64::max);
        1.0 + self.rhs.abs().max(term_max)
    }
}

#[derive(Debug, Clone)]
pub struct ConeBlock {
    pub rows: Vec<LinearRow>,
    pub cone: ConeSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub objective_value: f64,
    /// Largest scale-normalized constraint violation at the primal point.
    pub max_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub n_vars: usize,
    /// Dense linear objective coefficients (minimization).
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    /// Equality rows `a·x = rhs`.
    pub eq: Vec<LinearRow>,
    pub cones: Vec<ConeBlock>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

/// Signed violation of the cone's defining inequality for a slack vector;
/// nonpositive iff the point is a member.
pub fn cone_violation(cone: &ConeSpec, s: &[f64]) -> f64 {
    debug_assert_eq!(s.len(), cone.dim());
    match cone {
        ConeSpec::NonNeg(_) => s.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(-v)),
        ConeSpec::Quad(_) => {
            let tail: f64 = s[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            tail - s[0]
        }
        ConeSpec::RotQuad(_) => {
            let tail: f64 = s[2..].iter().map(|v| v * v).sum();
            (tail - 2.0 * s[0] * s[1]).max(-s[0]).max(-s[1])
        }
        ConeSpec::Exp => {
            if s[1] > 0.0 {
                s[1] * (s[2] / s[1]).exp() - s[0]
            } else {
                // closure: x1 >= 0, x2 = 0, x3 <= 0
                (-s[0]).max(s[2]).max(-s[1])
            }
        }
    }
}

impl ConicProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            objective_constant: 0.0,
            eq: Vec::new(),
            cones: Vec::new(),
            lower: vec![None; n_vars],
            upper: vec![None; n_vars],
        }
    }

    pub fn add_eq(&mut self, row: LinearRow) {
        self.eq.push(row);
    }

    pub fn add_cone(&mut self, rows: Vec<LinearRow>, cone: ConeSpec) {
        self.cones.push(ConeBlock { rows, cone });
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        if self.objective.len() != self.n_vars
            || self.lower.len() != self.n_vars
            || self.upper.len() != self.n_vars
        {
            return Err(ConicError::Malformed(
                "objective/bounds length differs from n_vars".into(),
            ));
        }
        let check_row = |row: &LinearRow| -> Result<(), ConicError> {
            for &(j, a) in &row.coeffs {
                if j >= self.n_vars {
                    return Err(ConicError::Malformed(format!(
                        "row references variable {j} outside 0..{}",
                        self.n_vars
                    )));
                }
                if !a.is_finite() {
                    return Err(ConicError::Malformed("non-finite coefficient".into()));
                }
            }
            if !row.rhs.is_finite() {
                return Err(ConicError::Malformed("non-finite rhs".into()));
            }
            Ok(())
        };
        for row in &self.eq {
            check_row(row)?;
        }
        for block in &self.cones {
            if block.rows.len() != block.cone.dim() {
                return Err(ConicError::Malformed(format!(
                    "cone of dimension {} has {} rows",
                    block.cone.dim(),
                    block.rows.len()
                )));
            }
            let min_dim_ok = match block.cone {
                ConeSpec::Quad(d) => d >= 2,
                ConeSpec::RotQuad(d) => d >= 3,
                ConeSpec::NonNeg(d) => d >= 1,
                ConeSpec::Exp => true,
            };
            if !min_dim_ok {
                return Err(ConicError::Malformed(format!(
                    "cone dimension too small: {:?}",
                    block.cone
                )));
            }
            for row in &block.rows {
                check_row(row)?;
            }
        }
        Ok(())
    }

    /// Per-constraint signed violations at `point`: equality rows first
    /// (absolute residual), then one entry per cone block, then one entry per
    /// variable with a finite bound. Every entry is ≤ 0 iff the point is
    /// feasible.
    pub fn residuals(&self, point: &[f64]) -> Result<Vec<f64>, ConicError> {
        if point.len() != self.n_vars {
            return Err(ConicError::DimensionMismatch {
                expected: self.n_vars,
                got: point.len(),
            });
        }
        let mut out = Vec::new();
        for row in &self.eq {
            out.push((row.eval(point) - row.rhs).abs());
        }
        for block in &self.cones {
            let slack: Vec<f64> = block.rows.iter().map(|r| r.slack(point)).collect();
            out.push(cone_violation(&block.cone, &slack));
        }
        for j in 0..self.n_vars {
            if self.lower[j].is_some() || self.upper[j].is_some() {
                let lo = self.lower[j].map_or(f64::NEG_INFINITY, |l| l - point[j]);
                let hi = self.upper[j].map_or(f64::NEG_INFINITY, |u| point[j] - u);
                out.push(lo.max(hi));
            }
        }
        Ok(out)
    }

    /// Largest violation normalized by each constraint's own scale.
    fn scaled_max_residual(&self, point: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.eq {
            let viol = (row.eval(point) - row.rhs).abs();
            worst = worst.max(viol / row.scale_hint(point));
        }
        for block in &self.cones {
            let slack: Vec<f64> = block.rows.iter().map(|r| r.slack(point)).collect();
            let scale = 1.0 + slack.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            worst = worst.max(cone_violation(&block.cone, &slack) / scale);
        }
        for j in 0..self.n_vars {
            if let Some(lo) = self.lower[j] {
                worst = worst.max((lo - point[j]) / (1.0 + lo.abs()));
            }
            if let Some(hi) = self.upper[j] {
                worst = worst.max((point[j] - hi) / (1.0 + hi.abs()));
            }
        }
        worst
    }

    /// Solves the program with the embedded interior-point backend.
    ///
    /// `tol` is the feasibility tolerance for accepting a solution as
    /// optimal; the backend is run tighter than this.
    pub fn solve(&self, tol: f64) -> Result<ConicSolution, ConicError> {
        self.validate()?;

        // Assemble stacked constraint matrix in Clarabel's A·x + s = b form.
        let mut builder = CscBuilder::new(self.n_vars);
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        if !self.eq.is_empty() {
            for row in &self.eq {
                builder.push_row(&row.coeffs);
                b.push(row.rhs);
            }
            cones.push(ZeroConeT(self.eq.len()));
        }

        // Box bounds as one nonnegative block.
        let mut n_bound_rows = 0;
        for j in 0..self.n_vars {
            if let Some(lo) = self.lower[j] {
                builder.push_row(&[(j, -1.0)]);
                b.push(-lo);
                n_bound_rows += 1;
            }
            if let Some(hi) = self.upper[j] {
                builder.push_row(&[(j, 1.0)]);
                b.push(hi);
                n_bound_rows += 1;
            }
        }
        if n_bound_rows > 0 {
            cones.push(NonnegativeConeT(n_bound_rows));
        }

        for block in &self.cones {
            match block.cone {
                ConeSpec::NonNeg(d) => {
                    for row in &block.rows {
                        builder.push_row(&row.coeffs);
                        b.push(row.rhs);
                    }
                    cones.push(NonnegativeConeT(d));
                }
                ConeSpec::Quad(d) => {
                    for row in &block.rows {
                        builder.push_row(&row.coeffs);
                        b.push(row.rhs);
                    }
                    cones.push(SecondOrderConeT(d));
                }
                ConeSpec::RotQuad(d) => {
                    // (s1, s2, rest) in Qr  <=>  ((s1+s2)/sqrt2, (s1-s2)/sqrt2, rest) in Q
                    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
                    let combine = |ra: &LinearRow, rb: &LinearRow, sign: f64| -> LinearRow {
                        let mut coeffs = ra.coeffs.clone();
                        for &(j, a) in &rb.coeffs {
                            coeffs.push((j, sign * a));
                        }
                        for c in coeffs.iter_mut() {
                            c.1 *= inv_sqrt2;
                        }
                        LinearRow::new(coeffs, inv_sqrt2 * (ra.rhs + sign * rb.rhs))
                    };
                    let plus = combine(&block.rows[0], &block.rows[1], 1.0);
                    let minus = combine(&block.rows[0], &block.rows[1], -1.0);
                    builder.push_row(&plus.coeffs);
                    b.push(plus.rhs);
                    builder.push_row(&minus.coeffs);
                    b.push(minus.rhs);
                    for row in &block.rows[2..] {
                        builder.push_row(&row.coeffs);
                        b.push(row.rhs);
                    }
                    cones.push(SecondOrderConeT(d));
                }
                ConeSpec::Exp => {
                    // ours: s1 >= s2 e^{s3/s2}; Clarabel: (x, y, z) with
                    // y e^{x/y} <= z, so the slack order is (s3, s2, s1).
                    for idx in [2usize, 1, 0] {
                        let row = &block.rows[idx];
                        builder.push_row(&row.coeffs);
                        b.push(row.rhs);
                    }
                    cones.push(ExponentialConeT());
                }
            }
        }

        if b.is_empty() {
            // Unconstrained: optimal iff the objective is identically zero.
            let unbounded = self.objective.iter().any(|&c| c != 0.0);
            return Ok(ConicSolution {
                status: if unbounded {
                    SolveStatus::NumericalFailure
                } else {
                    SolveStatus::Optimal
                },
                primal: vec![0.0; self.n_vars],
                objective_value: self.objective_constant,
                max_residual: 0.0,
            });
        }

        let a = builder.finish(b.len());
        let p = CscMatrix::<f64>::zeros((self.n_vars, self.n_vars));
        let solver_tol = (tol * 0.1).clamp(1e-12, 1e-9);
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_feas(solver_tol)
            .tol_gap_abs(solver_tol)
            .tol_gap_rel(solver_tol)
            .build()
            .map_err(|e| ConicError::Setup(format!("{e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &self.objective, &a, &b, &cones, settings)
            .map_err(|e| ConicError::Setup(format!("{e:?}")))?;
        solver.solve();

        let primal = solver.solution.x.clone();
        let objective_value = self.objective_constant
            + self
                .objective
                .iter()
                .zip(&primal)
                .map(|(c, x)| c * x)
                .sum::<f64>();
        let max_residual = self.scaled_max_residual(&primal);

        let status = match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                if max_residual <= tol {
                    SolveStatus::Optimal
                } else {
                    log::debug!(
                        "solver reported {:?} but scaled residual {max_residual:e} > {tol:e}",
                        solver.solution.status
                    );
                    SolveStatus::NumericalFailure
                }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::MaxIterations => SolveStatus::IterationLimit,
            _ => SolveStatus::NumericalFailure,
        };

        Ok(ConicSolution {
            status,
            primal,
            objective_value,
            max_residual,
        })
    }

    /// Plain-text dump in a conic-benchmark style layout, one section per
    /// objective, equality rows, cone list, and bounds.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let fmt_row = |row: &LinearRow| -> String {
            let terms: Vec<String> = row
                .coeffs
                .iter()
                .map(|(j, a)| format!("{a:+.17e} x{j}"))
                .collect();
            format!("{} | rhs {:+.17e}", terms.join(" "), row.rhs)
        };
        writeln!(out, "VER 1").unwrap();
        writeln!(out, "VAR {}", self.n_vars).unwrap();
        writeln!(out, "OBJ min constant {:+.17e}", self.objective_constant).unwrap();
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                writeln!(out, "  {c:+.17e} x{j}").unwrap();
            }
        }
        writeln!(out, "EQ {}", self.eq.len()).unwrap();
        for row in &self.eq {
            writeln!(out, "  {}", fmt_row(row)).unwrap();
        }
        writeln!(out, "CONES {}", self.cones.len()).unwrap();
        for block in &self.cones {
            let name = match block.cone {
                ConeSpec::NonNeg(d) => format!("NONNEG {d}"),
                ConeSpec::Quad(d) => format!("QUAD {d}"),
                ConeSpec::RotQuad(d) => format!("RQUAD {d}"),
                ConeSpec::Exp => "EXP 3".to_string(),
            };
            writeln!(out, "  {name}").unwrap();
            for row in &block.rows {
                writeln!(out, "    {}", fmt_row(row)).unwrap();
            }
        }
        writeln!(out, "BOUNDS").unwrap();
        for j in 0..self.n_vars {
            if self.lower[j].is_some() || self.upper[j].is_some() {
                writeln!(
                    out,
                    "  x{j} [{}, {}]",
                    self.lower[j].map_or("-inf".into(), |v| format!("{v:+.17e}")),
                    self.upper[j].map_or("+inf".into(), |v| format!("{v:+.17e}")),
                )
                .unwrap();
            }
        }
        out
    }
}

/// Row-by-row triplet accumulator producing a CSC matrix.
struct CscBuilder {
    n_cols: usize,
    triplets: Vec<(usize, usize, f64)>,
    next_row: usize,
}

impl CscBuilder {
    fn new(n_cols: usize) -> Self {
        Self {
            n_cols,
            triplets: Vec::new(),
            next_row: 0,
        }
    }

    fn push_row(&mut self, coeffs: &[(usize, f64)]) {
        for &(j, a) in coeffs {
            if a != 0.0 {
                self.triplets.push((self.next_row, j, a));
            }
        }
        self.next_row += 1;
    }

    fn finish(mut self, n_rows: usize) -> CscMatrix<f64> {
        assert_eq!(self.next_row, n_rows);
        self.triplets.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        // merge duplicate (row, col) cells by summing
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(self.triplets.len());
        for (r, c, v) in self.triplets {
            match merged.last_mut() {
                Some((lr, lc, lv)) if *lr == r && *lc == c => *lv += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut colptr = vec![0usize; self.n_cols + 1];
        let mut rowval = Vec::with_capacity(merged.len());
        let mut nzval = Vec::with_capacity(merged.len());
        let mut cur_col = 0usize;
        for (r, c, v) in merged {
            while cur_col < c {
                cur_col += 1;
                colptr[cur_col] = rowval.len();
            }
            rowval.push(r);
            nzval.push(v);
        }
        while cur_col < self.n_cols {
            cur_col += 1;
            colptr[cur_col] = rowval.len();
        }
        CscMatrix::new(n_rows, self.n_cols, colptr, rowval, nzval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exp_cone_minimum_is_e() {
        // minimize x s.t. (x, 1, 1) in K_exp
        let mut p = ConicProgram::new(1);
        p.objective[0] = 1.0;
        p.add_cone(
            vec![
                LinearRow::of_var(0),
                LinearRow::constant(1.0),
                LinearRow::constant(1.0),
            ],
            ConeSpec::Exp,
        );
        let sol = p.solve(DEFAULT_FEAS_TOL).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal[0] - std::f64::consts::E).abs() < 1e-6);
        assert!(sol.max_residual <= DEFAULT_FEAS_TOL);
    }

    #[test]
    fn rotated_cone_minimum() {
        // minimize xi s.t. (eta, xi, sqrt(0.2)) in Qr3, eta <= 2 -> xi* = 0.05
        let mut p = ConicProgram::new(2);
        p.objective[1] = 1.0;
        p.upper[0] = Some(2.0);
        p.lower[0] = Some(0.0);
        p.lower[1] = Some(0.0);
        p.add_cone(
            vec![
                LinearRow::of_var(0),
                LinearRow::of_var(1),
                LinearRow::constant(0.2f64.sqrt()),
            ],
            ConeSpec::RotQuad(3),
        );
        let sol = p.solve(DEFAULT_FEAS_TOL).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective_value - 0.05).abs() < 1e-6, "{}", sol.objective_value);
    }

    #[test]
    fn empty_program_is_trivially_optimal() {
        let p = ConicProgram::new(3);
        let sol = p.solve(DEFAULT_FEAS_TOL).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.objective_value, 0.0);
    }

    #[test]
    fn malformed_program_is_hard_error() {
        let mut p = ConicProgram::new(1);
        p.add_cone(vec![LinearRow::of_var(0)], ConeSpec::Exp);
        assert!(matches!(
            p.solve(DEFAULT_FEAS_TOL),
            Err(ConicError::Malformed(_))
        ));
    }

    #[test]
    fn residual_examples() {
        assert!(
            (cone_violation(&ConeSpec::Exp, &[0.9, 1.0, 0.0]) - 0.1).abs() < 1e-12
        );
        let v = cone_violation(&ConeSpec::Quad(4), &[1.0, 1.0, 1.0, 1.5]);
        assert!((v - 1.0615528128088303).abs() < 1e-12);
        // feasible points give nonpositive entries
        assert!(cone_violation(&ConeSpec::Exp, &[3.0, 1.0, 1.0]) <= 0.0);
        assert!(cone_violation(&ConeSpec::RotQuad(3), &[1.0, 1.0, 1.0]) <= 0.0);
    }

    #[test]
    fn residual_vector_shape_and_feasibility() {
        let mut p = ConicProgram::new(2);
        p.add_eq(LinearRow::new(vec![(0, 1.0), (1, 1.0)], 3.0));
        p.lower[0] = Some(0.0);
        p.add_cone(
            vec![LinearRow::of_var(0), LinearRow::of_var(1)],
            ConeSpec::NonNeg(2),
        );
        let r = p.residuals(&[1.0, 2.0]).unwrap();
        assert_eq!(r.len(), 3); // 1 eq + 1 cone + 1 bounded var
        assert!(r.iter().all(|&v| v <= 1e-12));
        assert!(matches!(
            p.residuals(&[1.0]),
            Err(ConicError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cone_membership_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..500 {
            let dim = rng.gen_range(2..6);
            let mut s: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            // force membership of Q^n by lifting the head
            let tail: f64 = s[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            s[0] = tail + rng.gen_range(0.0..1.0);
            let c = rng.gen_range(0.01..100.0);
            let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
            assert!(cone_violation(&ConeSpec::Quad(dim), &scaled) <= 1e-9 * c);

            if dim >= 3 {
                let mut r: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                r[0] = rng.gen_range(0.1..2.0);
                let tail: f64 = r[2..].iter().map(|v| v * v).sum();
                r[1] = tail / (2.0 * r[0]) + rng.gen_range(0.0..1.0);
                let scaled: Vec<f64> = r.iter().map(|v| v * c).collect();
                assert!(cone_violation(&ConeSpec::RotQuad(dim), &scaled) <= 1e-9 * c * c);
            }
        }
    }

    /// Dense Gaussian elimination for the tiny vertex-enumeration oracle.
    fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a
            .iter()
            .zip(b)
            .map(|(row, rhs)| {
                let mut r = row.clone();
                r.push(*rhs);
                r
            })
            .collect();
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| {
                m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap()
            })?;
            if m[pivot][col].abs() < 1e-10 {
                return None;
            }
            m.swap(col, pivot);
            for r in 0..n {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for c in col..=n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
    }

    #[test]
    fn lp_matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut checked = 0;
        while checked < 50 {
            let n = rng.gen_range(2..4usize);
            let m = rng.gen_range(2..4usize);
            // rows a.x <= b, plus box 0 <= x <= u; feasibility anchored at x0
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            let u: Vec<f64> = x0.iter().map(|v| v + rng.gen_range(0.5..2.0)).collect();
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let b: Vec<f64> = rows
                .iter()
                .map(|r| {
                    r.iter().zip(&x0).map(|(a, x)| a * x).sum::<f64>()
                        + rng.gen_range(0.1..1.0)
                })
                .collect();
            let cost: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let mut p = ConicProgram::new(n);
            p.objective = cost.clone();
            for j in 0..n {
                p.lower[j] = Some(0.0);
                p.upper[j] = Some(u[j]);
            }
            let cone_rows: Vec<LinearRow> = rows
                .iter()
                .zip(&b)
                .map(|(r, rhs)| {
                    LinearRow::new(
                        r.iter().enumerate().map(|(j, a)| (j, *a)).collect(),
                        *rhs,
                    )
                })
                .collect();
            p.add_cone(cone_rows, ConeSpec::NonNeg(m));
            let sol = p.solve(1e-8).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);

            // oracle: enumerate all vertices of {Ax<=b, 0<=x<=u}
            let mut all_rows: Vec<(Vec<f64>, f64)> = Vec::new();
            for (r, rhs) in rows.iter().zip(&b) {
                all_rows.push((r.clone(), *rhs));
            }
            for j in 0..n {
                let mut e = vec![0.0; n];
                e[j] = -1.0;
                all_rows.push((e.clone(), 0.0));
                let mut e2 = vec![0.0; n];
                e2[j] = 1.0;
                all_rows.push((e2, u[j]));
            }
            let idx: Vec<usize> = (0..all_rows.len()).collect();
            let mut best = f64::INFINITY;
            // all n-subsets
            let mut stack = vec![(Vec::<usize>::new(), 0usize)];
            while let Some((chosen, start)) = stack.pop() {
                if chosen.len() == n {
                    let a_sub: Vec<Vec<f64>> =
                        chosen.iter().map(|&i| all_rows[i].0.clone()).collect();
                    let b_sub: Vec<f64> = chosen.iter().map(|&i| all_rows[i].1).collect();
                    if let Some(x) = solve_dense(&a_sub, &b_sub) {
                        let feas = all_rows.iter().all(|(r, rhs)| {
                            r.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() <= rhs + 1e-7
                        });
                        if feas {
                            let val: f64 = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
                            best = best.min(val);
                        }
                    }
                    continue;
                }
                for (pos, &i) in idx.iter().enumerate().skip(start) {
                    let mut next = chosen.clone();
                    next.push(i);
                    stack.push((next, pos + 1));
                }
            }
            assert!(
                (sol.objective_value - best).abs() <= 1e-6 * best.abs().max(1.0),
                "solver {} vs oracle {}",
                sol.objective_value,
                best
            );
            checked += 1;
        }
    }

    #[test]
    fn optimal_solutions_pass_residual_check() {
        // reuse the exponential-cone instance, checking solve/residuals
        // agreement
        let mut p = ConicProgram::new(1);
        p.objective[0] = 1.0;
        p.add_cone(
            vec![
                LinearRow::of_var(0),
                LinearRow::constant(1.0),
                LinearRow::constant(1.0),
            ],
            ConeSpec::Exp,
        );
        let sol = p.solve(1e-8).unwrap();
        let res = p.residuals(&sol.primal).unwrap();
        assert!(res.iter().all(|&v| v <= 1e-7));
    }

    #[test]
    fn dump_contains_sections() {
        let mut p = ConicProgram::new(2);
        p.objective[0] = 1.0;
        p.add_eq(LinearRow::new(vec![(1, 2.0)], 4.0));
        p.add_cone(
            vec![LinearRow::of_var(0), LinearRow::of_var(1)],
            ConeSpec::NonNeg(2),
        );
        p.lower[0] = Some(0.0);
        let text = p.dump();
        for section in ["OBJ", "EQ 1", "CONES 1", "NONNEG 2", "BOUNDS"] {
            assert!(text.contains(section), "missing {section}");
        }
    }
}
