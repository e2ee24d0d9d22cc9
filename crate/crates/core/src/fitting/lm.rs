//! Bounded Levenberg–Marquardt with a forward/central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this
    /// fraction.
    pub ftol: f64,
    /// Stop when every step component is below this (relative) size.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            ftol: 1e-14,
            xtol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    /// `Σ r²` at `x`.
    pub cost: f64,
    pub residuals: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after every accepted step, starting with the initial cost.
    pub history: Vec<f64>,
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Central-difference Jacobian of `f` at `x`, clipped to the bounds.
pub fn jacobian<F>(f: &F, x: &[f64], lower: &[f64], upper: &[f64], m: usize) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1e-3);
        let up = (x[j] + h).min(upper[j]);
        let lo = (x[j] - h).max(lower[j]);
        let mut xp = x.to_vec();
        xp[j] = up;
        let rp = f(&xp)?;
        let mut xm = x.to_vec();
        xm[j] = lo;
        let rm = f(&xm)?;
        let d = up - lo;
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / d;
        }
    }
    Some(jac)
}

/// Minimises `Σ r(x)²` with `x` projected onto `[lower, upper]` after each
/// step. Returns `None` if the residual function fails at the start.
pub fn levenberg_marquardt<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &LmOptions) -> Option<LmOutcome>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let clamp = |x: &mut [f64]| {
        for j in 0..n {
            x[j] = x[j].clamp(lower[j], upper[j]);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let mut r = f(&x)?;
    let m = r.len();
    let mut c = cost(&r);
    let mut history = vec![c];
    let mut jac = jacobian(&f, &x, lower, upper, m)?;
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if c == 0.0 {
            converged = true;
            break;
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let diag_max = (0..n).map(|j| jtj[(j, j)]).fold(0.0, f64::max);
        let mut accepted = false;
        let mut small_step = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for j in 0..n {
                a[(j, j)] += lambda * jtj[(j, j)].max(1e-12 * diag_max).max(f64::MIN_POSITIVE);
            }
            let Some(delta) = a.clone().cholesky().map(|ch| ch.solve(&(-&g))).or_else(|| a.lu().solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let mut xn: Vec<f64> = (0..n).map(|j| x[j] + delta[j]).collect();
            clamp(&mut xn);
            small_step = (0..n).all(|j| (xn[j] - x[j]).abs() <= opts.xtol * (x[j].abs() + opts.xtol));
            if let Some(rn) = f(&xn) {
                let cn = cost(&rn);
                if cn.is_finite() && cn <= c {
                    let rel = (c - cn) / c;
                    x = xn;
                    r = rn;
                    c = cn;
                    history.push(c);
                    lambda = (lambda / 3.0).max(1e-15);
                    accepted = true;
                    if rel <= opts.ftol || small_step {
                        converged = true;
                    }
                    break;
                }
            }
            if small_step {
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent direction left within the step budget: at a minimum.
            converged = small_step || lambda > 1e10;
            break;
        }
        jac = jacobian(&f, &x, lower, upper, m)?;
        if converged {
            break;
        }
    }
    Some(LmOutcome {
        x,
        cost: c,
        residuals: r,
        jacobian: jac,
        iterations,
        converged,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_exactly() {
        let ts: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.5 * (-1.3 * t).exp()).collect();
        let f = |p: &[f64]| Some(ts.iter().zip(&ys).map(|(t, y)| p[0] * (-p[1] * t).exp() - y).collect());
        let inf = f64::INFINITY;
        let out = levenberg_marquardt(f, &[1.0, 0.5], &[-inf, -inf], &[inf, inf], &LmOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 2.5).abs() < 1e-9 && (out.x[1] - 1.3).abs() < 1e-9);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn respects_bounds() {
        let f = |p: &[f64]| Some(vec![p[0] - 3.0]);
        let out = levenberg_marquardt(f, &[0.0], &[-1.0], &[1.0], &LmOptions::default()).unwrap();
        assert_eq!(out.x[0], 1.0);
    }
}
