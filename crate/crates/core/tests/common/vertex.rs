//! Brute-force LP reference: enumerate basic solutions.

#![allow(clippy::needless_range_loop)]

use coedge::lp::LpProblem;

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[p][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn next_combination(idx: &mut [usize], total: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < total - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Minimum objective over feasible vertices, `None` if there are none.
/// Assumes the problem is bounded.
pub fn vertex_optimum(p: &LpProblem) -> Option<f64> {
    let n = p.num_vars();
    // inequalities: A_ub rows then -x_i <= 0
    let mut ineq: Vec<(Vec<f64>, f64)> = p.a_ub.iter().cloned().zip(p.b_ub.iter().copied()).collect();
    for i in 0..n {
        let mut row = vec![0.0; n];
        row[i] = -1.0;
        ineq.push((row, 0.0));
    }
    let eq: Vec<(Vec<f64>, f64)> = p.a_eq.iter().cloned().zip(p.b_eq.iter().copied()).collect();
    let need = n.checked_sub(eq.len())?;
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..need).collect();
    if need > ineq.len() {
        return None;
    }
    loop {
        let mut a: Vec<Vec<f64>> = eq.iter().map(|(r, _)| r.clone()).collect();
        let mut b: Vec<f64> = eq.iter().map(|(_, v)| *v).collect();
        for &i in &idx {
            a.push(ineq[i].0.clone());
            b.push(ineq[i].1);
        }
        if let Some(x) = solve_square(a, b) {
            if p.max_violation(&x) <= 1e-9 {
                let obj = p.objective(&x);
                if best.is_none_or(|v| obj < v) {
                    best = Some(obj);
                }
            }
        }
        if need == 0 || !next_combination(&mut idx, ineq.len()) {
            break;
        }
    }
    best
}

pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
