//! Dense two-phase simplex for small problems:
//! minimize `c.x` subject to `A_ub x <= b_ub`, `A_eq x = b_eq`, `x >= 0`.
//!
//! Rows are scaled by their largest coefficient before pivoting. Entering
//! columns follow Dantzig's rule until a degenerate pivot is seen, after
//! which the phase switches to Bland's rule for the rest of its run.

#![allow(clippy::needless_range_loop)]

use thiserror::Error;

/// Solver tolerances, all in one place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Constraint residual accepted on an optimal point (scaled rows).
    pub feasibility: f64,
    /// Smallest pivot magnitude the ratio test will accept.
    pub pivot: f64,
    /// Relative objective agreement used by callers comparing optima.
    pub objective_rel: f64,
    /// Phase-one residual, relative to the largest scaled right-hand side,
    /// above which the problem is declared infeasible.
    pub phase_one: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    feasibility: 1e-7,
    pivot: 1e-11,
    objective_rel: 1e-6,
    phase_one: 1e-9,
};

const MAX_ITERATIONS: usize = 100_000;
const RHS_ROUNDOFF: f64 = 1e-11;
const RELATIVE_PIVOT: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
}

impl LpProblem {
    pub fn new(c: Vec<f64>) -> Self {
        Self {
            c,
            ..Default::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> usize {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
        self.a_ub.len() - 1
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> usize {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
        self.a_eq.len() - 1
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.c.len();
        if n == 0 {
            return Err(LpError::Dimension("no variables".into()));
        }
        if self.a_ub.len() != self.b_ub.len() || self.a_eq.len() != self.b_eq.len() {
            return Err(LpError::Dimension("row count differs from rhs length".into()));
        }
        for (i, row) in self.a_ub.iter().chain(&self.a_eq).enumerate() {
            if row.len() != n {
                return Err(LpError::Dimension(format!("row {i} has {} entries, expected {n}", row.len())));
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.c) {
            return Err(LpError::NonFinite("objective"));
        }
        if !self.a_ub.iter().all(|r| finite(r)) || !finite(&self.b_ub) {
            return Err(LpError::NonFinite("inequality rows"));
        }
        if !self.a_eq.iter().all(|r| finite(r)) || !finite(&self.b_eq) {
            return Err(LpError::NonFinite("equality rows"));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }

    /// `b_ub - A_ub x` per inequality row.
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.a_ub.iter().zip(&self.b_ub).map(|(row, b)| b - dot(row, x)).collect()
    }

    /// Largest scaled constraint violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0f64, |w, &v| w.max(-v));
        for (row, b) in self.a_ub.iter().zip(&self.b_ub) {
            worst = worst.max((dot(row, x) - b) / row_scale(row));
        }
        for (row, b) in self.a_eq.iter().zip(&self.b_eq) {
            worst = worst.max((dot(row, x) - b).abs() / row_scale(row));
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Improving direction when unbounded.
    pub ray: Option<Vec<f64>>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn row_scale(row: &[f64]) -> f64 {
    let m = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    Dantzig,
    Bland,
}

enum PhaseOutcome {
    Optimal,
    Unbounded(usize),
}

struct Tableau {
    rows: usize,
    cols: usize, // structural + slack + artificial columns, rhs excluded
    data: Vec<f64>,
    cost: Vec<f64>, // reduced costs, last entry = -objective
    basis: Vec<usize>,
    allowed: Vec<bool>,
    iterations: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let width = self.cols + 1;
        let p = self.at(pr, pc);
        for c in 0..width {
            self.data[pr * width + c] /= p;
        }
        let pivot_row: Vec<f64> = self.data[pr * width..(pr + 1) * width].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * width + pc];
            if f != 0.0 {
                for c in 0..width {
                    self.data[r * width + c] -= f * pivot_row[c];
                }
                self.data[r * width + pc] = 0.0;
            }
        }
        let f = self.cost[pc];
        if f != 0.0 {
            for c in 0..width {
                self.cost[c] -= f * pivot_row[c];
            }
            self.cost[pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.iterations += 1;
    }

    /// Round-off can leave basic values a hair below zero; a later pivot on
    /// a small element would magnify that into a real infeasibility.
    fn clamp_rhs(&mut self) {
        let width = self.cols + 1;
        for r in 0..self.rows {
            let v = &mut self.data[r * width + self.cols];
            if *v < 0.0 && *v > -RHS_ROUNDOFF {
                *v = 0.0;
            }
        }
    }

    fn run(&mut self, opt_eps: f64) -> Result<PhaseOutcome, LpError> {
        let mut rule = Rule::Dantzig;
        loop {
            if self.iterations > MAX_ITERATIONS {
                return Err(LpError::NumericalBreakdown("iteration limit reached".into()));
            }
            let entering = match rule {
                Rule::Dantzig => {
                    let mut best: Option<(usize, f64)> = None;
                    for j in 0..self.cols {
                        if self.allowed[j] && self.cost[j] < -opt_eps && best.is_none_or(|(_, v)| self.cost[j] < v) {
                            best = Some((j, self.cost[j]));
                        }
                    }
                    best.map(|(j, _)| j)
                }
                Rule::Bland => (0..self.cols).find(|&j| self.allowed[j] && self.cost[j] < -opt_eps),
            };
            let Some(pc) = entering else {
                return Ok(PhaseOutcome::Optimal);
            };

            // entries far below the column's largest are treated as zero
            let col_max = (0..self.rows).fold(0.0f64, |m, r| m.max(self.at(r, pc)));
            let min_pivot = TOLERANCES.pivot.max(RELATIVE_PIVOT * col_max);
            let mut theta = f64::INFINITY;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > min_pivot {
                    theta = theta.min(self.rhs(r).max(0.0) / a);
                }
            }
            if !theta.is_finite() {
                return Ok(PhaseOutcome::Unbounded(pc));
            }
            // rows tying on the minimum ratio; pick the largest pivot, or the
            // lowest basic index under Bland's rule
            let slack = 1e-12 * theta.abs().max(1.0);
            let mut chosen: Option<usize> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a <= min_pivot || self.rhs(r).max(0.0) / a > theta + slack {
                    continue;
                }
                chosen = match chosen {
                    None => Some(r),
                    Some(prev) => {
                        let better = match rule {
                            Rule::Dantzig => a > self.at(prev, pc),
                            Rule::Bland => self.basis[r] < self.basis[prev],
                        };
                        Some(if better { r } else { prev })
                    }
                };
            }
            let pr = chosen.ok_or_else(|| LpError::NumericalBreakdown("empty ratio test".into()))?;
            if self.at(pr, pc).abs() < TOLERANCES.pivot {
                return Err(LpError::NumericalBreakdown(format!(
                    "pivot {:e} below tolerance",
                    self.at(pr, pc)
                )));
            }
            if theta <= 1e-12 {
                rule = Rule::Bland;
            }
            self.pivot(pr, pc);
            self.clamp_rhs();
        }
    }
}

pub fn solve(problem: &LpProblem) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let n = problem.num_vars();
    let m_ub = problem.a_ub.len();
    let m_eq = problem.a_eq.len();
    let m = m_ub + m_eq;

    // scaled rows with non-negative right-hand sides
    let mut rows: Vec<(Vec<f64>, f64, Option<f64>)> = Vec::with_capacity(m);
    for (row, &b) in problem.a_ub.iter().zip(&problem.b_ub) {
        let s = row_scale(row);
        let sign = if b < 0.0 { -1.0 } else { 1.0 };
        rows.push((row.iter().map(|v| sign * v / s).collect(), sign * b / s, Some(sign)));
    }
    for (row, &b) in problem.a_eq.iter().zip(&problem.b_eq) {
        let s = row_scale(row);
        let sign = if b < 0.0 { -1.0 } else { 1.0 };
        rows.push((row.iter().map(|v| sign * v / s).collect(), sign * b / s, None));
    }

    let needs_artificial: Vec<bool> = rows.iter().map(|(_, _, slack)| !matches!(slack, Some(s) if *s > 0.0)).collect();
    let n_art = needs_artificial.iter().filter(|&&a| a).count();
    let cols = n + m_ub + n_art;
    let width = cols + 1;
    let mut data = vec![0.0; m * width];
    let mut basis = vec![0usize; m];
    let mut art_col = n + m_ub;
    for (r, (coef, rhs, slack)) in rows.iter().enumerate() {
        data[r * width..r * width + n].copy_from_slice(coef);
        data[r * width + cols] = *rhs;
        if let Some(sign) = slack {
            data[r * width + n + r] = *sign;
            if *sign > 0.0 {
                basis[r] = n + r;
            }
        }
        if needs_artificial[r] {
            data[r * width + art_col] = 1.0;
            basis[r] = art_col;
            art_col += 1;
        }
    }
    let is_art = |j: usize| j >= n + m_ub;
    let art_of: Vec<Option<usize>> = {
        let mut next = n + m_ub;
        needs_artificial
            .iter()
            .map(|&a| {
                a.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    };
    let mut kept: Vec<usize> = (0..m).collect();

    let mut t = Tableau {
        rows: m,
        cols,
        data,
        cost: vec![0.0; width],
        basis,
        allowed: vec![true; cols],
        iterations: 0,
    };

    if n_art > 0 {
        for j in n + m_ub..cols {
            t.cost[j] = 1.0;
        }
        for r in 0..m {
            if is_art(t.basis[r]) {
                for c in 0..width {
                    t.cost[c] -= t.data[r * width + c];
                }
            }
        }
        match t.run(1e-11)? {
            PhaseOutcome::Optimal => {}
            PhaseOutcome::Unbounded(_) => {
                return Err(LpError::NumericalBreakdown("phase one reported unbounded".into()));
            }
        }
        let infeasibility = -t.cost[cols];
        let b_max = rows.iter().fold(1.0f64, |m, (_, b, _)| m.max(b.abs()));
        if infeasibility > TOLERANCES.phase_one * b_max {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                objective: f64::NAN,
                ray: None,
                iterations: t.iterations,
            });
        }
        // drive zero-valued artificials out of the basis; rows where that is
        // impossible are redundant and get dropped
        let mut keep = vec![true; m];
        for r in 0..m {
            if !is_art(t.basis[r]) {
                continue;
            }
            let candidate = (0..n + m_ub)
                .filter(|&j| t.at(r, j).abs() > 1e-9)
                .max_by(|&a, &b| t.at(r, a).abs().total_cmp(&t.at(r, b).abs()));
            match candidate {
                Some(j) => t.pivot(r, j),
                None => keep[r] = false,
            }
        }
        if keep.iter().any(|k| !k) {
            kept.retain(|&r| keep[r]);
            let mut data = Vec::with_capacity(t.data.len());
            let mut basis = Vec::new();
            for r in 0..m {
                if keep[r] {
                    data.extend_from_slice(&t.data[r * width..(r + 1) * width]);
                    basis.push(t.basis[r]);
                }
            }
            t.rows = basis.len();
            t.data = data;
            t.basis = basis;
        }
        for j in n + m_ub..cols {
            t.allowed[j] = false;
        }
    }

    // phase two reduced costs
    let c_max = problem.c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let opt_eps = 1e-9 * if c_max > 0.0 { c_max } else { 1.0 };
    t.cost = vec![0.0; width];
    t.cost[..n].copy_from_slice(&problem.c);
    for r in 0..t.rows {
        let b = t.basis[r];
        let cb = if b < n { problem.c[b] } else { 0.0 };
        if cb != 0.0 {
            for c in 0..width {
                t.cost[c] -= cb * t.data[r * width + c];
            }
        }
    }

    let outcome = t.run(opt_eps)?;
    let mut x = vec![0.0; n];
    for r in 0..t.rows {
        if t.basis[r] < n {
            x[t.basis[r]] = t.rhs(r);
        }
    }
    match outcome {
        PhaseOutcome::Unbounded(pc) => {
            let mut ray = vec![0.0; n];
            if pc < n {
                ray[pc] = 1.0;
            }
            for r in 0..t.rows {
                if t.basis[r] < n {
                    ray[t.basis[r]] = -t.at(r, pc);
                }
            }
            Ok(LpSolution {
                status: LpStatus::Unbounded,
                objective: f64::NEG_INFINITY,
                x,
                ray: Some(ray),
                iterations: t.iterations,
            })
        }
        PhaseOutcome::Optimal => {
            // re-solve the final basis against the original rows to shed
            // the error accumulated over the pivots
            let entry = |i: usize, j: usize| -> f64 {
                if j < n {
                    rows[i].0[j]
                } else if j < n + m_ub {
                    if j - n == i {
                        rows[i].2.unwrap_or(0.0)
                    } else {
                        0.0
                    }
                } else if art_of[i] == Some(j) {
                    1.0
                } else {
                    0.0
                }
            };
            let b_mat: Vec<Vec<f64>> = kept.iter().map(|&i| t.basis.iter().map(|&j| entry(i, j)).collect()).collect();
            let rhs: Vec<f64> = kept.iter().map(|&i| rows[i].1).collect();
            if let Some(xb) = solve_dense(b_mat, rhs) {
                let mut refined = vec![0.0; n];
                for (r, &j) in t.basis.iter().enumerate() {
                    if j < n {
                        refined[j] = xb[r];
                    }
                }
                if problem.max_violation(&refined) < problem.max_violation(&x) {
                    x = refined;
                }
            }
            for v in &mut x {
                if *v < 0.0 && *v > -1e-9 {
                    *v = 0.0;
                }
            }
            let violation = problem.max_violation(&x);
            if violation > TOLERANCES.feasibility {
                return Err(LpError::NumericalBreakdown(format!(
                    "optimal point violates constraints by {violation:e}"
                )));
            }
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective: problem.objective(&x),
                x,
                ray: None,
                iterations: t.iterations,
            })
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[p][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - tail) / a[r][r];
    }
    Some(x)
}
