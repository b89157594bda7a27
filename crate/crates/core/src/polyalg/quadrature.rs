use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Tensor Gauss–Legendre rule on an axis-aligned box.
///
/// Points are stored flat: point `q` occupies `points[q*dim .. (q+1)*dim]`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    exactness_degree: usize,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.dim..(q + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim.max(1))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-axis polynomial degree integrated exactly.
    pub fn exactness_degree(&self) -> usize {
        self.exactness_degree
    }

    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.points().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// nodes ascending.
pub fn gauss_legendre(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&n) {
        return r.clone();
    }
    let rule = Arc::new(compute_gauss_legendre(n));
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss–Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
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
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor rule with `points_per_axis` nodes per nondegenerate axis.
///
/// An axis with `a == b` is treated as a fixed coordinate carrying weight 1,
/// so a facet embedded in space–time integrates with its own `d`-measure.
pub fn gauss_rule(bounds: &[(f64, f64)], points_per_axis: usize) -> QuadratureRule {
    gauss_rule_composite(bounds, points_per_axis, &vec![1; bounds.len()])
}

/// Tensor rule that splits axis `k` into `pieces[k]` equal subintervals, each
/// carrying an `n`-point Gauss rule.
pub fn gauss_rule_composite(bounds: &[(f64, f64)], n: usize, pieces: &[usize]) -> QuadratureRule {
    assert_eq!(bounds.len(), pieces.len());
    let dim = bounds.len();
    let base = gauss_legendre(n);
    let axes: Vec<(Vec<f64>, Vec<f64>)> = bounds
        .iter()
        .zip(pieces)
        .map(|(&(a, b), &m)| {
            if a == b {
                return (vec![a], vec![1.0]);
            }
            let m = m.max(1);
            let step = (b - a) / m as f64;
            let mut xs = Vec::with_capacity(m * n);
            let mut ws = Vec::with_capacity(m * n);
            for piece in 0..m {
                let lo = a + piece as f64 * step;
                let hi = if piece + 1 == m { b } else { lo + step };
                let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                for (x, w) in base.0.iter().zip(&base.1) {
                    xs.push(mid + half * x);
                    ws.push(half * w);
                }
            }
            (xs, ws)
        })
        .collect();
    let total: usize = axes.iter().map(|a| a.1.len()).product();
    let mut points = Vec::with_capacity(total * dim);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        let mut w = 1.0;
        for k in 0..dim {
            points.push(axes[k].0[idx[k]]);
            w *= axes[k].1[idx[k]];
        }
        weights.push(w);
        // Last axis varies fastest.
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].0.len() {
                break;
            }
            idx[k] = 0;
        }
    }
    QuadratureRule { dim, points, weights, exactness_degree: 2 * n - 1 }
}
