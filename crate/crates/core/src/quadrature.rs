//! Gauss–Legendre rules and adaptive one-dimensional integration.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on `P_n` from Chebyshev-like
    /// starting points. Accurate to a few ulp for `n` up to several hundred.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, dp)
}

/// Adaptive trapezoid integration with a Richardson check: each panel is
/// accepted once the one- and two-trapezoid estimates agree to within
/// `3·tol_local`, and the Richardson-extrapolated value is kept.
///
/// `breakpoints` are interior points where the integrand varies rapidly
/// (resonances); the range is split there before refinement starts.
pub fn adaptive_trapezoid<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    rel_tol: f64,
) -> f64 {
    assert!(b >= a, "integration bounds must be ordered");
    if a == b {
        return 0.0;
    }
    let mut edges = vec![a];
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.extend(inner);
    edges.push(b);

    // Seed panels: 32 per segment so narrow features are not straddled.
    const SEED: usize = 32;
    let mut panels = Vec::new();
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        for k in 0..SEED {
            let x0 = lo + (hi - lo) * k as f64 / SEED as f64;
            let x1 = lo + (hi - lo) * (k + 1) as f64 / SEED as f64;
            panels.push((x0, x1));
        }
    }

    // Rough scale for an absolute tolerance.
    let rough: f64 = panels
        .iter()
        .map(|&(x0, x1)| 0.5 * (x1 - x0) * (f(x0).abs() + f(x1).abs()))
        .sum();
    let abs_tol = rel_tol * rough.max(f64::MIN_POSITIVE);

    let mut total = 0.0;
    let width = b - a;
    for (x0, x1) in panels {
        let f0 = f(x0);
        let f1 = f(x1);
        total += refine(&f, x0, x1, f0, f1, abs_tol * (x1 - x0) / width, 0);
    }
    total
}

fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fb: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let fm = f(m);
    let h = b - a;
    let coarse = 0.5 * h * (fa + fb);
    let fine = 0.25 * h * (fa + 2.0 * fm + fb);
    let err = fine - coarse;
    if err.abs() <= 3.0 * tol || depth >= 48 {
        return fine + err / 3.0;
    }
    refine(f, a, m, fa, fm, 0.5 * tol, depth + 1) + refine(f, m, b, fm, fb, 0.5 * tol, depth + 1)
}

/// Composite trapezoid rule on sampled data.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}
