//! Damped Gauss-Newton (Levenberg-Marquardt) over residual problems.
//!
//! Jacobians come from forward-mode dual numbers, evaluated in chunks of
//! [`DUAL_WIDTH`] seed directions. Problems expose their residuals either as
//! one dense vector ([`ResidualProblem`]) or as sparse blocks that each touch
//! only a few variables ([`BlockedProblem`]); the window solves in the
//! retargeting stage rely on the latter, which makes the normal equations
//! banded and keeps the per-iteration cost linear in the window length.

use crate::error::{Error, Result};
use crate::math::Real;
use crate::solver::dual::{Dual16, DUAL_WIDTH};
use nalgebra::DMatrix;
use serde::Serialize;

/// A deterministic residual map `r(x)`, evaluated with `f64` or duals.
pub trait ResidualProblem {
    fn dimension(&self) -> usize;
    fn residual_count(&self) -> usize;
    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>);
}

/// A residual map split into blocks with local variable support.
///
/// Block `b` reads only the variables listed in `block_vars(b)` (global
/// indices, ascending) and produces `block_rows(b)` residuals. The normal
/// matrix then has bandwidth `max(last - first)` over all blocks.
pub trait BlockedProblem {
    fn dimension(&self) -> usize;
    fn block_count(&self) -> usize;
    fn block_vars(&self, b: usize) -> Vec<usize>;
    fn block_rows(&self, b: usize) -> usize;
    /// Evaluates block `b`; `x_local` holds the block's variables in the
    /// order given by `block_vars(b)`.
    fn eval_block<T: Real>(&self, b: usize, x_local: &[T], out: &mut Vec<T>);
}

/// Adapter treating a dense problem as a single block over all variables.
pub struct DenseAsBlocked<'a, P: ResidualProblem>(pub &'a P);

impl<P: ResidualProblem> BlockedProblem for DenseAsBlocked<'_, P> {
    fn dimension(&self) -> usize {
        self.0.dimension()
    }
    fn block_count(&self) -> usize {
        1
    }
    fn block_vars(&self, _b: usize) -> Vec<usize> {
        (0..self.0.dimension()).collect()
    }
    fn block_rows(&self, _b: usize) -> usize {
        self.0.residual_count()
    }
    fn eval_block<T: Real>(&self, _b: usize, x_local: &[T], out: &mut Vec<T>) {
        self.0.eval(x_local, out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Stalled,
}

/// Outcome of one solve: accepted iterations and the cost trajectory endpoints.
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub status: SolveStatus,
    pub damping_final: f64,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

pub const DAMPING_MIN: f64 = 1e-12;
pub const DAMPING_MAX: f64 = 1e8;
const MAX_CONSECUTIVE_REJECTS: usize = 10;

/// Full residual vector of a blocked problem, blocks concatenated in order.
pub fn eval_all_blocked<P: BlockedProblem>(p: &P, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut buf = Vec::new();
    for b in 0..p.block_count() {
        let vars = p.block_vars(b);
        let local: Vec<f64> = vars.iter().map(|&v| x[v]).collect();
        buf.clear();
        p.eval_block::<f64>(b, &local, &mut buf);
        out.extend_from_slice(&buf);
    }
    out
}

/// Exact forward-mode Jacobian of a dense problem, chunked over variables.
pub fn jacobian<P: ResidualProblem>(p: &P, x: &[f64]) -> Result<DMatrix<f64>> {
    jacobian_blocked(&DenseAsBlocked(p), x)
}

/// Dense Jacobian of a blocked problem (test and diagnostics path).
pub fn jacobian_blocked<P: BlockedProblem>(p: &P, x: &[f64]) -> Result<DMatrix<f64>> {
    let dim = p.dimension();
    let mut rows_total = 0;
    for b in 0..p.block_count() {
        rows_total += p.block_rows(b);
    }
    let mut jac = DMatrix::zeros(rows_total, dim);
    let mut row0 = 0;
    for b in 0..p.block_count() {
        let vars = p.block_vars(b);
        let (jb, rb) = block_jacobian(p, b, &vars, x)?;
        for (r, _) in rb.iter().enumerate() {
            for (c, &v) in vars.iter().enumerate() {
                jac[(row0 + r, v)] = jb[(r, c)];
            }
        }
        row0 += rb.len();
    }
    Ok(jac)
}

/// Jacobian and residuals of a single block via chunked duals.
fn block_jacobian<P: BlockedProblem>(
    p: &P,
    b: usize,
    vars: &[usize],
    x: &[f64],
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let m = vars.len();
    let rows = p.block_rows(b);
    let mut jac = DMatrix::zeros(rows, m);
    let mut residuals = vec![0.0; rows];
    let mut out: Vec<Dual16> = Vec::with_capacity(rows);
    let mut local: Vec<Dual16> = vars.iter().map(|&v| Dual16::constant(x[v])).collect();

    for chunk_start in (0..m).step_by(DUAL_WIDTH) {
        let chunk = chunk_start..(chunk_start + DUAL_WIDTH).min(m);
        for (k, c) in chunk.clone().enumerate() {
            local[c] = Dual16::variable(x[vars[c]], k);
        }
        out.clear();
        p.eval_block(b, &local, &mut out);
        debug_assert_eq!(out.len(), rows);
        for (r, d) in out.iter().enumerate() {
            if !d.re.is_finite() {
                return Err(Error::validation(format!(
                    "non-finite residual at block {b}, row {r}"
                )));
            }
            for (k, c) in chunk.clone().enumerate() {
                jac[(r, c)] = d.eps[k];
            }
            if chunk_start == 0 {
                residuals[r] = d.re;
            }
        }
        for c in chunk {
            local[c] = Dual16::constant(x[vars[c]]);
        }
    }
    if m == 0 {
        // no variables: still record residual values
        let locals: Vec<f64> = Vec::new();
        let mut buf = Vec::new();
        p.eval_block::<f64>(b, &locals, &mut buf);
        residuals.copy_from_slice(&buf);
    }
    Ok((jac, residuals))
}

/// Symmetric banded matrix, lower band stored column-wise.
struct BandMatrix {
    dim: usize,
    bw: usize,
    /// data[j * (bw + 1) + (i - j)] = entry (i, j), i >= j
    data: Vec<f64>,
}

impl BandMatrix {
    fn zeros(dim: usize, bw: usize) -> Self {
        BandMatrix {
            dim,
            bw,
            data: vec![0.0; dim * (bw + 1)],
        }
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i >= j && i - j <= self.bw);
        self.data[j * (self.bw + 1) + (i - j)] += v;
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * (self.bw + 1) + (i - j)]
    }

    fn reset(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Cholesky of `self + damping*I`; returns None if not positive definite.
    fn cholesky_damped(&self, damping: f64) -> Option<BandMatrix> {
        let n = self.dim;
        let bw = self.bw;
        let mut l = BandMatrix::zeros(n, bw);
        for j in 0..n {
            let mut d = self.get(j, j) + damping;
            let k0 = j.saturating_sub(bw);
            for k in k0..j {
                let v = l.get(j, k);
                d -= v * v;
            }
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            let dj = d.sqrt();
            *l.data.get_mut(j * (bw + 1)).unwrap() = dj;
            let imax = (j + bw).min(n - 1);
            for i in (j + 1)..=imax {
                let mut s = self.get(i, j);
                let k0 = i.saturating_sub(bw).max(k0);
                for k in k0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                let idx = j * (bw + 1) + (i - j);
                l.data[idx] = s / dj;
            }
        }
        Some(l)
    }

    /// Solves `L L^T x = b` given the Cholesky factor `self`.
    fn solve_cholesky(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let bw = self.bw;
        let mut y = b.to_vec();
        for i in 0..n {
            let k0 = i.saturating_sub(bw);
            let mut s = y[i];
            for k in k0..i {
                s -= self.get(i, k) * y[k];
            }
            y[i] = s / self.get(i, i);
        }
        let mut x = y;
        for i in (0..n).rev() {
            let imax = (i + bw).min(n - 1);
            let mut s = x[i];
            for k in (i + 1)..=imax {
                s -= self.get(k, i) * x[k];
            }
            x[i] = s / self.get(i, i);
        }
        x
    }
}

struct Linearization {
    cost: f64,
    gradient: Vec<f64>,
    normal: BandMatrix,
}

/// Builds J^T J, J^T r and the cost at `x`, block by block.
fn linearize<P: BlockedProblem>(p: &P, x: &[f64], bw: usize) -> Result<Linearization> {
    let dim = p.dimension();
    let mut normal = BandMatrix::zeros(dim, bw);
    normal.reset();
    let mut gradient = vec![0.0; dim];
    let mut cost = 0.0;

    for b in 0..p.block_count() {
        let vars = p.block_vars(b);
        let (jb, rb) = block_jacobian(p, b, &vars, x)?;
        let rows = rb.len();
        for r in &rb {
            cost += 0.5 * r * r;
        }
        let m = vars.len();
        for pcol in 0..m {
            let vp = vars[pcol];
            let mut g = 0.0;
            for r in 0..rows {
                g += jb[(r, pcol)] * rb[r];
            }
            gradient[vp] += g;
            for qcol in 0..=pcol {
                let vq = vars[qcol];
                let mut h = 0.0;
                for r in 0..rows {
                    h += jb[(r, pcol)] * jb[(r, qcol)];
                }
                let (hi, lo) = if vp >= vq { (vp, vq) } else { (vq, vp) };
                normal.add(hi, lo, h);
            }
        }
    }
    Ok(Linearization {
        cost,
        gradient,
        normal,
    })
}

fn cost_at<P: BlockedProblem>(p: &P, x: &[f64]) -> f64 {
    let mut cost = 0.0;
    let mut buf: Vec<f64> = Vec::new();
    for b in 0..p.block_count() {
        let vars = p.block_vars(b);
        let local: Vec<f64> = vars.iter().map(|&v| x[v]).collect();
        buf.clear();
        p.eval_block::<f64>(b, &local, &mut buf);
        for r in &buf {
            cost += 0.5 * r * r;
        }
    }
    cost
}

fn bandwidth<P: BlockedProblem>(p: &P) -> usize {
    let mut bw = 0;
    for b in 0..p.block_count() {
        let vars = p.block_vars(b);
        if let (Some(&first), Some(&last)) = (vars.first(), vars.last()) {
            bw = bw.max(last - first);
        }
    }
    bw
}

/// Levenberg-Marquardt on a blocked problem.
pub fn solve_blocked<P: BlockedProblem>(
    p: &P,
    x0: &[f64],
    max_iters: usize,
    tol: f64,
) -> Result<(Vec<f64>, SolveReport)> {
    assert!(max_iters >= 1, "max_iters must be >= 1");
    assert!(tol > 0.0, "tol must be positive");
    let bw = bandwidth(p);
    let mut x = x0.to_vec();
    let mut lin = linearize(p, &x, bw)?;
    let initial_cost = lin.cost;
    let mut cost = initial_cost;

    let max_diag = (0..p.dimension())
        .map(|i| lin.normal.get(i, i))
        .fold(0.0_f64, f64::max);
    let mut damping = (1e-12 * max_diag).max(DAMPING_MIN);

    let mut iterations = 0;
    let mut rejects = 0;
    let mut status = SolveStatus::MaxIters;

    while iterations < max_iters {
        let grad_inf = lin.gradient.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
        if grad_inf <= tol {
            status = SolveStatus::Converged;
            break;
        }

        let step = match lin.normal.cholesky_damped(damping) {
            Some(l) => {
                let neg_g: Vec<f64> = lin.gradient.iter().map(|g| -g).collect();
                Some(l.solve_cholesky(&neg_g))
            }
            None => None,
        };

        let accepted = match step {
            Some(delta) => {
                let x_try: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
                let cost_try = cost_at(p, &x_try);
                if cost_try.is_finite() && cost_try < cost {
                    let rel_drop = (cost - cost_try) / cost.max(f64::MIN_POSITIVE);
                    x = x_try;
                    cost = cost_try;
                    iterations += 1;
                    rejects = 0;
                    damping = (damping / 10.0).max(DAMPING_MIN);
                    lin = linearize(p, &x, bw)?;
                    if rel_drop < tol {
                        status = SolveStatus::Converged;
                        break;
                    }
                    true
                } else {
                    false
                }
            }
            None => false,
        };

        if !accepted {
            rejects += 1;
            damping *= 10.0;
            if rejects >= MAX_CONSECUTIVE_REJECTS || damping > DAMPING_MAX {
                status = SolveStatus::Stalled;
                break;
            }
        }
    }

    Ok((
        x,
        SolveReport {
            iterations,
            initial_cost,
            final_cost: cost,
            status,
            damping_final: damping,
        },
    ))
}

/// Levenberg-Marquardt on a dense problem.
pub fn solve_nlsq<P: ResidualProblem>(
    p: &P,
    x0: &[f64],
    max_iters: usize,
    tol: f64,
) -> Result<(Vec<f64>, SolveReport)> {
    solve_blocked(&DenseAsBlocked(p), x0, max_iters, tol)
}
