//! Reference computations written directly from the definitions, kept apart
//! from the library code they are compared against.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use seqn_core::{Dataset, SparseRow};

pub fn rvec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Minimizer of `μ|y| + (t − y)²/(2λ)` by cases on the sign of `y`.
pub fn prox_abs(t: f64, lambda: f64, mu: f64) -> f64 {
    let right = t - lambda * mu;
    let left = t + lambda * mu;
    if right > 0.0 {
        right
    } else if left < 0.0 {
        left
    } else {
        0.0
    }
}

pub fn prox_l1(x: &[f64], lambda: f64, mu: f64) -> Vec<f64> {
    x.iter().map(|&t| prox_abs(t, lambda, mu)).collect()
}

/// `min_y μ|y| + (t − y)²/(2λ)` evaluated at the minimizer.
pub fn envelope_abs(t: f64, lambda: f64, mu: f64) -> f64 {
    let y = prox_abs(t, lambda, mu);
    mu * y.abs() + (t - y) * (t - y) / (2.0 * lambda)
}

/// Dense ℓ1-logistic data held as plain rows.
pub struct Logistic {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl Logistic {
    pub fn random<R: Rng>(rng: &mut R, samples: usize, features: usize, scale: f64) -> Self {
        let rows = (0..samples).map(|_| rvec(rng, features, scale)).collect();
        let labels = (0..samples).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        Self { rows, labels }
    }

    pub fn from_dataset(data: &Dataset) -> Self {
        let n = data.num_features();
        let mut rows = Vec::new();
        for r in data.rows() {
            let mut dense = vec![0.0; n];
            for (&j, &v) in r.indices.iter().zip(r.values) {
                dense[j] = v;
            }
            rows.push(dense);
        }
        Self {
            rows,
            labels: data.labels().to_vec(),
        }
    }

    pub fn dataset(&self) -> Dataset {
        let n = self.rows[0].len();
        let rows = self
            .rows
            .iter()
            .zip(&self.labels)
            .map(|(a, &y)| SparseRow {
                label: y,
                indices: (0..n).collect(),
                values: a.clone(),
            })
            .collect();
        Dataset::from_rows("oracle", rows, Some(n)).unwrap()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let m = -self.labels[i] * dot(&self.rows[i], x);
        // log(1 + e^m) without overflow
        m.max(0.0) + (-m.abs()).exp().ln_1p()
    }

    pub fn component_gradient(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let y = self.labels[i];
        let m = -y * dot(&self.rows[i], x);
        let s = 1.0 / (1.0 + (-m).exp());
        self.rows[i].iter().map(|a| -y * s * a).collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (0..self.len()).map(|i| self.component_value(i, x)).sum::<f64>() / self.len() as f64
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.batch_gradient(x, &(0..self.len()).collect::<Vec<_>>())
    }

    pub fn batch_gradient(&self, x: &[f64], batch: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for &i in batch {
            for (gj, v) in g.iter_mut().zip(self.component_gradient(i, x)) {
                *gj += v / batch.len() as f64;
            }
        }
        g
    }

    /// `‖a_i‖²/4`, without any flooring.
    pub fn lipschitz(&self, i: usize) -> f64 {
        norm_sq(&self.rows[i]) / 4.0
    }

    pub fn lipschitz_max(&self) -> f64 {
        (0..self.len()).map(|i| self.lipschitz(i)).fold(0.0, f64::max)
    }

    pub fn psi(&self, x: &[f64], mu: f64) -> f64 {
        self.value(x) + mu * x.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// All `b`-subsets of `0..n`.
pub fn subsets(n: usize, b: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, b: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == b {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, b, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, b, &mut Vec::new(), &mut out);
    out
}

/// `W` from `W⁰ = γI`, `W ← (I − ρuyᵀ)W(I − ρyuᵀ) + ρuuᵀ`, oldest pair first.
pub fn bfgs_matrix(us: &[Vec<f64>], ys: &[Vec<f64>]) -> DMatrix<f64> {
    let n = us[0].len();
    let last = us.len() - 1;
    let gamma = dot(&us[last], &ys[last]) / dot(&ys[last], &ys[last]);
    let mut w = DMatrix::<f64>::identity(n, n) * gamma;
    for (u, y) in us.iter().zip(ys) {
        let u = DVector::from_column_slice(u);
        let y = DVector::from_column_slice(y);
        let rho = 1.0 / u.dot(&y);
        let v = DMatrix::<f64>::identity(n, n) - &y * u.transpose() * rho;
        w = v.transpose() * &w * &v + &u * u.transpose() * rho;
    }
    w
}

/// Block matrix with the BFGS recursion over the pairs restricted to
/// `active` that keep `|⟨u_I, y_I⟩| ≥ δ₁‖u‖²`, and `ζI` elsewhere. `None`
/// when no pair qualifies.
pub fn block_matrix(us: &[Vec<f64>], ys: &[Vec<f64>], active: &[usize], delta1: f64, zeta: f64) -> Option<DMatrix<f64>> {
    let n = us[0].len();
    let mut qu = Vec::new();
    let mut qy = Vec::new();
    for (u, y) in us.iter().zip(ys) {
        let ui: Vec<f64> = active.iter().map(|&i| u[i]).collect();
        let yi: Vec<f64> = active.iter().map(|&i| y[i]).collect();
        if dot(&ui, &yi).abs() >= delta1 * norm_sq(u) {
            qu.push(ui);
            qy.push(yi);
        }
    }
    if qu.is_empty() || active.is_empty() {
        return None;
    }
    let inner = bfgs_matrix(&qu, &qy);
    let mut w = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        if !active.contains(&i) {
            w[(i, i)] = zeta;
        }
    }
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            w[(i, j)] = inner[(a, b)];
        }
    }
    Some(w)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

pub fn apply(m: &DMatrix<f64>, r: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(r)).as_slice().to_vec()
}

/// `argmin_y f(y) + μ‖y‖₁ + ‖y − x‖²/(2θ)` by proximal gradient; the objective
/// is strongly convex so the iteration contracts.
pub fn tilted_prox(p: &Logistic, mu: f64, x: &[f64], theta: f64) -> Vec<f64> {
    let step = 1.0 / (p.lipschitz_max() + 1.0 / theta);
    let mut y = x.to_vec();
    for _ in 0..100_000 {
        let g = p.gradient(&y);
        let trial: Vec<f64> = y
            .iter()
            .zip(&g)
            .zip(x)
            .map(|((yi, gi), xi)| yi - step * (gi + (yi - xi) / theta))
            .collect();
        let next = prox_l1(&trial, step, mu);
        let moved = dist_sq(&next, &y);
        y = next;
        if moved < 1e-32 {
            break;
        }
    }
    y
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}
