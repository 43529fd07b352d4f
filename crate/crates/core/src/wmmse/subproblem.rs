//! Power-constrained quadratic sub-problems of the form
//!
//! ```text
//! min  tr(W^H B W M) − 2 Re tr(W^H C^H)
//! s.t. tr(W M W^H) ≤ P
//! ```
//!
//! with `B ⪰ 0` and `M ≻ 0` (`M = I` for the precoders). The optimum is
//! `W = (B + νI)^{-1} C^H M^{-1}`; the multiplier `ν` is found by bisection on
//! the diagonal form `Σ_i X_ii / (λ_i + ν)²` obtained from one eigendecomposition
//! of `B`, so no inverse is formed inside the search.

use crate::error::{Error, Result};
use crate::matops::{fro_norm_sq, hermitian_eig, hermitian_part, hermitian_solve, trace_re, CMat};

/// Eigenvalues below this fraction of the largest are treated as null.
const NULL_EIG: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionSettings {
    /// Relative gap `|power − P| / P` at which a search stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BisectionSettings {
    fn default() -> Self {
        Self { tol: 1e-13, max_iter: 200 }
    }
}

/// Minimizer of a single-constraint sub-problem and its multiplier.
#[derive(Debug, Clone)]
pub struct QuadraticSolution {
    pub w: CMat,
    /// `0` when the constraint is inactive, `∞` for a zero budget.
    pub nu: f64,
}

/// Minimizer of a two-constraint sub-problem.
#[derive(Debug, Clone)]
pub struct DualQuadraticSolution {
    pub w: CMat,
    /// Multiplier of `‖W‖_F² ≤ P₁`.
    pub nu: f64,
    /// Multiplier of `tr(W^H B̃ W) ≤ P₂`.
    pub nu_tilde: f64,
}

/// Diagonalized sub-problem, ready for the multiplier search.
struct Secular {
    u: CMat,
    lambda: Vec<f64>,
    x: Vec<f64>,
    /// `U^H C^H M^{-1}`, the part of `W` right of the diagonal.
    core: CMat,
    active: Vec<bool>,
}

impl Secular {
    fn new(b: &CMat, rhs: &CMat, right_weight: Option<&CMat>) -> Result<Self> {
        let eig = hermitian_eig(&hermitian_part(b))?;
        let y = eig.vectors.adjoint() * rhs;
        let (core, x) = match right_weight {
            None => {
                let x = y.row_iter().map(|r| r.iter().map(|z| z.norm_sqr()).sum()).collect();
                (y, x)
            }
            Some(m) => {
                let k = hermitian_solve(m, &y.adjoint())?;
                let yk = &y * &k;
                let x = (0..yk.nrows()).map(|i| yk[(i, i)].re.max(0.0)).collect();
                (k.adjoint(), x)
            }
        };
        let top = eig.values.first().copied().unwrap_or(0.0);
        let active = eig.values.iter().map(|&l| l > NULL_EIG * top).collect();
        Ok(Self { u: eig.vectors, lambda: eig.values, x, core, active })
    }

    fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lambda
            .iter()
            .zip(&self.x)
            .zip(&self.active)
            .filter(|(_, a)| **a)
            .map(|((l, x), _)| (*l, *x))
    }

    /// `Σ X_ii / (λ_i + ν)²` over non-null directions.
    fn power(&self, nu: f64) -> f64 {
        self.terms().map(|(l, x)| x / ((l + nu) * (l + nu))).sum()
    }

    fn trace_x(&self) -> f64 {
        self.terms().map(|(_, x)| x).sum()
    }

    fn matrix(&self, nu: f64) -> CMat {
        let mut scaled = self.core.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            let d = if self.active[i] { 1.0 / (self.lambda[i] + nu) } else { 0.0 };
            row.scale_mut(d);
        }
        &self.u * scaled
    }
}

/// Bisection for `ν` on a decreasing power curve; returns the feasible end.
fn bisect_multiplier(sec: &Secular, budget: f64, settings: &BisectionSettings) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = (sec.trace_x() / budget).sqrt();
    let p_hi = sec.power(hi);
    if !(p_hi <= budget * (1.0 + 1e-12)) {
        return Err(Error::NoConvergence { what: "multiplier bracket (analytic upper bound violated)" });
    }
    for _ in 0..settings.max_iter {
        if (budget - sec.power(hi)).abs() <= settings.tol * budget || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if sec.power(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Solves the single-constraint sub-problem. `rhs` is `C^H`; `right_weight`
/// is `M` (identity when `None`).
pub fn solve_power_constrained(
    b: &CMat,
    rhs: &CMat,
    right_weight: Option<&CMat>,
    budget: f64,
    settings: &BisectionSettings,
) -> Result<QuadraticSolution> {
    if budget <= 0.0 || fro_norm_sq(rhs) == 0.0 {
        let nu = if budget <= 0.0 { f64::INFINITY } else { 0.0 };
        return Ok(QuadraticSolution { w: CMat::zeros(b.nrows(), rhs.ncols()), nu });
    }
    let sec = Secular::new(b, rhs, right_weight)?;
    if sec.trace_x() == 0.0 {
        return Ok(QuadraticSolution { w: CMat::zeros(b.nrows(), rhs.ncols()), nu: 0.0 });
    }
    let at_zero = sec.power(0.0);
    let nu = if at_zero <= budget { 0.0 } else { bisect_multiplier(&sec, budget, settings)? };
    Ok(QuadraticSolution { w: sec.matrix(nu), nu })
}

/// `tr(W^H B̃ W)`.
pub fn quadratic_power(w: &CMat, b_tilde: &CMat) -> f64 {
    trace_re(&(w.adjoint() * b_tilde * w))
}

/// Two-layer search for `min tr(W^H B W) − 2Re tr(W^H C^H)` subject to
/// `‖W‖_F² ≤ P₁` and `tr(W^H B̃ W) ≤ P₂`.
///
/// The inner layer folds `ν̃ B̃` into `B` and reuses the single-constraint
/// search. The outer layer brackets `ν̃` by doubling from `1e-12` (relative to
/// `‖B‖_F / ‖B̃‖_F`) and then bisects; `tr(W^H B̃ W)` is nonincreasing in `ν̃`
/// once `ν` is re-optimized.
pub fn solve_dual_constrained(
    b: &CMat,
    rhs: &CMat,
    b_tilde: &CMat,
    budget: f64,
    budget_tilde: f64,
    settings: &BisectionSettings,
) -> Result<DualQuadraticSolution> {
    if budget_tilde < 0.0 {
        return Err(Error::Infeasible(format!(
            "negative residual relay budget {budget_tilde:.3e}; update the relay matrix first"
        )));
    }
    let inner = |nu_tilde: f64| -> Result<(QuadraticSolution, f64)> {
        let folded = b + b_tilde.scale(nu_tilde);
        let sol = solve_power_constrained(&folded, rhs, None, budget, settings)?;
        let g = quadratic_power(&sol.w, b_tilde);
        Ok((sol, g))
    };
    let tilde_norm = fro_norm_sq(b_tilde).sqrt();
    let (first, g0) = inner(0.0)?;
    if tilde_norm == 0.0 || g0 <= budget_tilde * (1.0 + 0.5 * settings.tol) {
        return Ok(DualQuadraticSolution { w: first.w, nu: first.nu, nu_tilde: 0.0 });
    }
    if budget_tilde == 0.0 {
        return Ok(DualQuadraticSolution {
            w: CMat::zeros(b.nrows(), rhs.ncols()),
            nu: 0.0,
            nu_tilde: f64::INFINITY,
        });
    }
    let scale = (fro_norm_sq(b).sqrt() / tilde_norm).max(f64::MIN_POSITIVE);
    let mut lo = 0.0;
    let mut hi = 1e-12 * scale;
    let mut best = loop {
        let (sol, g) = inner(hi)?;
        if g <= budget_tilde {
            break (sol, g);
        }
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NoConvergence { what: "relay multiplier bracket" });
        }
    };
    for _ in 0..settings.max_iter {
        if (budget_tilde - best.1).abs() <= settings.tol * budget_tilde || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (sol, g) = inner(mid)?;
        if g > budget_tilde {
            lo = mid;
        } else {
            hi = mid;
            best = (sol, g);
        }
    }
    Ok(DualQuadraticSolution { w: best.0.w, nu: best.0.nu, nu_tilde: hi })
}

/// Objective `tr(W^H B W M) − 2 Re tr(W^H C^H)` of a sub-problem.
pub fn quadratic_objective(w: &CMat, b: &CMat, rhs: &CMat, right_weight: Option<&CMat>) -> f64 {
    let quad = match right_weight {
        None => trace_re(&(w.adjoint() * b * w)),
        Some(m) => trace_re(&(w.adjoint() * b * w * m)),
    };
    quad - 2.0 * trace_re(&(w.adjoint() * rhs))
}
