//! Log-barrier path-following solver for second-order cone margin programs.
//!
//! A margin program over `x ∈ R^n` and a scalar margin `s` reads
//!
//! ```text
//! maximize  s
//! s.t.      head_i(x) − w_i·s ≥ ‖tail_i(x)‖₂   for every cone i
//!           e_j(x) = 0                        for every equality j
//! ```
//!
//! with affine `head_i`, `tail_i`, `e_j`. Any `x` satisfying the equalities and
//! the cones with `w_i = 0` strictly can be completed to a strictly feasible
//! point by taking `s` small enough, so the barrier method starts inside and
//! never needs a phase-one problem. Deciding feasibility of the untightened
//! constraints reduces to checking the sign of the optimal margin.
//!
//! Each cone uses the barrier `−ln(u² − ‖v‖²)` (parameter 2). Newton systems
//! are dense and solved by Cholesky, with equality constraints eliminated
//! through the Schur complement.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{cholesky_in_place, cholesky_solve};
use crate::math::{ln, sqrt};

/// `Σ coeff·x[index] + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineRow {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineRow {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn single(index: usize, coeff: f64) -> Self {
        Self {
            terms: vec![(index, coeff)],
            constant: 0.0,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }

    #[inline]
    fn eval_linear(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum()
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= factor;
        }
        self.constant *= factor;
        self
    }
}

/// `head(x) − margin_weight·s ≥ ‖tail(x)‖`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cone {
    pub head: AffineRow,
    pub margin_weight: f64,
    pub tail: Vec<AffineRow>,
}

#[derive(Clone, Debug, Default)]
pub struct MarginProgram {
    pub num_vars: usize,
    pub cones: Vec<Cone>,
    pub equalities: Vec<AffineRow>,
}

impl MarginProgram {
    /// Slack `head − ‖tail‖` of every cone at `x` (margin excluded).
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.cones
            .iter()
            .map(|c| {
                let t: f64 = c.tail.iter().map(|r| { let v = r.eval(x); v * v }).sum();
                c.head.eval(x) - sqrt(t)
            })
            .collect()
    }

    /// Largest equality residual at `x`.
    pub fn equality_residual(&self, x: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|e| e.eval(x).abs())
            .fold(0.0, f64::max)
    }

    /// Margin of `x`: the largest `s` keeping every weighted cone satisfied.
    pub fn margin_of(&self, x: &[f64]) -> f64 {
        self.cones
            .iter()
            .zip(self.slacks(x))
            .filter(|(c, _)| c.margin_weight > 0.0)
            .map(|(c, slack)| slack / c.margin_weight)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarrierSettings {
    /// Barrier weight multiplier between centering rounds.
    pub mu: f64,
    pub initial_tau: f64,
    /// Stop once the duality-gap estimate `ν/τ` falls below this.
    pub gap_tol: f64,
    /// Centering stops when half the squared Newton decrement is below this.
    pub newton_tol: f64,
    pub max_newton_steps: usize,
    /// Stop as soon as the margin reaches this value.
    pub stop_above: Option<f64>,
    /// Stop once the margin upper bound drops below this value.
    pub stop_below: Option<f64>,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            mu: 16.0,
            initial_tau: 1.0,
            gap_tol: 1e-10,
            newton_tol: 1e-9,
            max_newton_steps: 600,
            stop_above: None,
            stop_below: None,
        }
    }
}

impl BarrierSettings {
    /// Slower, more careful schedule for retries.
    pub fn conservative(self) -> Self {
        Self {
            mu: 4.0,
            max_newton_steps: self.max_newton_steps * 3,
            ..self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarginStatus {
    /// Gap tolerance met; `margin` is optimal to within `gap_tol`.
    Converged,
    /// Margin reached `stop_above`.
    ReachedTarget,
    /// The optimal margin is certainly below `stop_below`.
    BelowTarget,
    NumericalTrouble,
}

#[derive(Clone, Debug)]
pub struct MarginSolution {
    pub x: Vec<f64>,
    pub margin: f64,
    /// Estimated upper bound on the optimal margin.
    pub upper_bound: f64,
    pub status: MarginStatus,
    pub newton_steps: usize,
}

struct ConeState {
    u: f64,
    tail_norm: f64,
    tail: Vec<f64>,
}

impl ConeState {
    #[inline]
    fn gamma(&self) -> f64 {
        (self.u - self.tail_norm) * (self.u + self.tail_norm)
    }

    #[inline]
    fn interior(&self) -> bool {
        self.u > self.tail_norm && self.u > 0.0
    }
}

struct Evaluator<'a> {
    program: &'a MarginProgram,
    n: usize,
}

impl<'a> Evaluator<'a> {
    fn states(&self, z: &[f64]) -> Vec<ConeState> {
        let s = z[self.n];
        self.program
            .cones
            .iter()
            .map(|c| {
                let u = c.head.eval(z) - c.margin_weight * s;
                let tail: Vec<f64> = c.tail.iter().map(|r| r.eval(z)).collect();
                let tail_norm = sqrt(tail.iter().map(|v| v * v).sum());
                ConeState { u, tail_norm, tail }
            })
            .collect()
    }

    fn objective(&self, z: &[f64], tau: f64, states: &[ConeState]) -> f64 {
        -tau * z[self.n] - states.iter().map(|st| ln(st.gamma())).sum::<f64>()
    }

    /// States at `z + alpha·dz`, or `None` if the point leaves the interior.
    fn trial(&self, z: &[f64], dz: &[f64], alpha: f64, buf: &mut Vec<f64>) -> Option<Vec<ConeState>> {
        buf.clear();
        buf.extend(z.iter().zip(dz).map(|(a, b)| a + alpha * b));
        let states = self.states(buf);
        states.iter().all(ConeState::interior).then_some(states)
    }
}

/// Maximizes the margin starting from `x0`.
///
/// `x0` must strictly satisfy every cone with zero margin weight; the margin
/// is initialized one unit below the tightest weighted cone. Equality
/// residuals at `x0` are driven to zero by the first full Newton step.
pub fn maximize_margin(
    program: &MarginProgram,
    x0: &[f64],
    settings: &BarrierSettings,
) -> MarginSolution {
    let n = program.num_vars;
    let dim = n + 1;
    let eval = Evaluator { program, n };
    let trouble = |z: Vec<f64>, steps: usize| {
        let margin = program.margin_of(&z[..n]);
        MarginSolution {
            x: z[..n].to_vec(),
            margin,
            upper_bound: f64::INFINITY,
            status: MarginStatus::NumericalTrouble,
            newton_steps: steps,
        }
    };

    let mut z = Vec::with_capacity(dim);
    z.extend_from_slice(x0);
    let start_margin = program.margin_of(x0);
    z.push(if start_margin.is_finite() {
        start_margin - 1.0
    } else {
        -1.0
    });
    let mut states = eval.states(&z);
    if !states.iter().all(ConeState::interior) {
        return trouble(z, 0);
    }

    let nu = 2.0 * program.cones.len() as f64;
    let mut tau = settings.initial_tau;
    let mut steps = 0usize;
    let mut hess = vec![0.0; dim * dim];
    let mut grad = vec![0.0; dim];
    let mut q = vec![0.0; dim];
    let mut touched: Vec<usize> = Vec::with_capacity(dim);
    let mut in_touched = vec![false; dim];
    let mut trial_buf = Vec::with_capacity(dim);
    let neq = program.equalities.len();

    loop {
        // centering at the current tau
        loop {
            if steps >= settings.max_newton_steps {
                return trouble(z, steps);
            }
            steps += 1;

            hess.iter_mut().for_each(|h| *h = 0.0);
            grad.iter_mut().for_each(|g| *g = 0.0);
            grad[n] = -tau;
            for (cone, st) in program.cones.iter().zip(&states) {
                let gamma = st.gamma();
                let a = 2.0 / gamma;
                // q = u ∇u − Σ v_j ∇v_j
                for &i in &touched {
                    q[i] = 0.0;
                    in_touched[i] = false;
                }
                touched.clear();
                let mut push = |i: usize, val: f64, q: &mut [f64]| {
                    if !in_touched[i] {
                        in_touched[i] = true;
                        touched.push(i);
                    }
                    q[i] += val;
                };
                for &(i, c) in &cone.head.terms {
                    push(i, st.u * c, &mut q);
                }
                if cone.margin_weight != 0.0 {
                    push(n, -st.u * cone.margin_weight, &mut q);
                }
                for (row, &v) in cone.tail.iter().zip(&st.tail) {
                    for &(i, c) in &row.terms {
                        push(i, -v * c, &mut q);
                    }
                }
                for &i in &touched {
                    grad[i] -= a * q[i];
                }
                // (2/γ)(Σ ∇v∇vᵀ − ∇u∇uᵀ) + (4/γ²) q qᵀ
                for row in &cone.tail {
                    for &(i, ci) in &row.terms {
                        let hrow = &mut hess[i * dim..(i + 1) * dim];
                        for &(j, cj) in &row.terms {
                            hrow[j] += a * ci * cj;
                        }
                    }
                }
                let head_terms = cone
                    .head
                    .terms
                    .iter()
                    .copied()
                    .chain((cone.margin_weight != 0.0).then_some((n, -cone.margin_weight)));
                for (i, ci) in head_terms.clone() {
                    let hrow = &mut hess[i * dim..(i + 1) * dim];
                    for (j, cj) in head_terms.clone() {
                        hrow[j] -= a * ci * cj;
                    }
                }
                let b = a * a;
                for &i in &touched {
                    let qi = b * q[i];
                    let hrow = &mut hess[i * dim..(i + 1) * dim];
                    for &j in &touched {
                        hrow[j] += qi * q[j];
                    }
                }
            }

            let Some(dz) = newton_direction(&mut hess, &grad, program, &z, dim, neq) else {
                return trouble(z, steps);
            };
            let decrement_sq = -grad.iter().zip(&dz).map(|(g, d)| g * d).sum::<f64>();
            let eq_residual = program.equality_residual(&z[..n]);
            if decrement_sq.abs() / 2.0 <= settings.newton_tol && eq_residual <= 1e-12 {
                break;
            }

            // backtracking: stay interior, then Armijo on the barrier objective
            let f0 = eval.objective(&z, tau, &states);
            let slope = grad.iter().zip(&dz).map(|(g, d)| g * d).sum::<f64>();
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..80 {
                if let Some(st) = eval.trial(&z, &dz, alpha, &mut trial_buf) {
                    let f1 = eval.objective(&trial_buf, tau, &st);
                    if eq_residual > 1e-12 || f1 <= f0 + 0.25 * alpha * slope {
                        accepted = Some((st, f1));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((st, f1)) => {
                    core::mem::swap(&mut z, &mut trial_buf);
                    states = st;
                    // progress lost in roundoff: the center is as good as it gets
                    if eq_residual <= 1e-12 && f0 - f1 <= 1e-15 * f0.abs().max(1.0) {
                        break;
                    }
                }
                None if decrement_sq < 1e-6 => break,
                None => return trouble(z, steps),
            }

            if let Some(target) = settings.stop_above {
                if z[n] >= target && program.equality_residual(&z[..n]) <= 1e-12 {
                    return MarginSolution {
                        x: z[..n].to_vec(),
                        margin: z[n],
                        upper_bound: f64::INFINITY,
                        status: MarginStatus::ReachedTarget,
                        newton_steps: steps,
                    };
                }
            }
        }

        let gap = nu / tau;
        let margin = z[n];
        if let Some(threshold) = settings.stop_below {
            if margin + 1.5 * gap < threshold {
                return MarginSolution {
                    x: z[..n].to_vec(),
                    margin,
                    upper_bound: margin + 1.5 * gap,
                    status: MarginStatus::BelowTarget,
                    newton_steps: steps,
                };
            }
        }
        if gap < settings.gap_tol {
            return MarginSolution {
                x: z[..n].to_vec(),
                margin,
                upper_bound: margin + 1.5 * gap,
                status: MarginStatus::Converged,
                newton_steps: steps,
            };
        }
        tau *= settings.mu;
    }
}

/// Solves `[H Eᵀ; E 0][dz; λ] = [−g; −r]` with `r` the equality residual.
fn newton_direction(
    hess: &mut [f64],
    grad: &[f64],
    program: &MarginProgram,
    z: &[f64],
    dim: usize,
    neq: usize,
) -> Option<Vec<f64>> {
    let diag_scale = (0..dim).map(|i| hess[i * dim + i]).fold(0.0, f64::max);
    let backup = hess.to_vec();
    let mut shift = 0.0;
    let mut ok = cholesky_in_place(hess, dim);
    for _ in 0..4 {
        if ok {
            break;
        }
        shift = if shift == 0.0 { 1e-14 * diag_scale } else { shift * 100.0 };
        hess.copy_from_slice(&backup);
        for i in 0..dim {
            hess[i * dim + i] += shift;
        }
        ok = cholesky_in_place(hess, dim);
    }
    if !ok {
        return None;
    }

    let mut w = grad.to_vec();
    cholesky_solve(hess, dim, &mut w);
    if neq == 0 {
        return Some(w.into_iter().map(|v| -v).collect());
    }

    // Y = H⁻¹ Eᵀ, S = E Y
    let mut y_cols: Vec<Vec<f64>> = Vec::with_capacity(neq);
    for e in &program.equalities {
        let mut col = vec![0.0; dim];
        for &(i, c) in &e.terms {
            col[i] += c;
        }
        cholesky_solve(hess, dim, &mut col);
        y_cols.push(col);
    }
    let mut schur = vec![0.0; neq * neq];
    let mut rhs = vec![0.0; neq];
    for (a, e) in program.equalities.iter().enumerate() {
        for (b, col) in y_cols.iter().enumerate() {
            schur[a * neq + b] = e.eval_linear(col);
        }
        rhs[a] = e.eval(z) - e.eval_linear(&w);
    }
    // symmetrize against roundoff before factoring
    for a in 0..neq {
        for b in 0..a {
            let avg = 0.5 * (schur[a * neq + b] + schur[b * neq + a]);
            schur[a * neq + b] = avg;
            schur[b * neq + a] = avg;
        }
    }
    if !cholesky_in_place(&mut schur, neq) {
        return None;
    }
    cholesky_solve(&schur, neq, &mut rhs);
    let mut dz: Vec<f64> = w.iter().map(|v| -v).collect();
    for (lambda, col) in rhs.iter().zip(&y_cols) {
        for (d, c) in dz.iter_mut().zip(col) {
            *d -= lambda * c;
        }
    }
    Some(dz)
}
