use super::Dataset;
use crate::oracles::FiniteSumProblem;
use crate::prox::{L1Norm, ProxFunction};

/// `log(1 + exp(t))` as `max(t, 0) + log1p(exp(−|t|))`.
#[inline]
pub fn logistic_loss(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

/// `ψ(x) = (1/N) Σ log(1 + exp(−b_i⟨a_i, x⟩)) + μ‖x‖₁`.
#[derive(Debug, Clone)]
pub struct LogRegProblem {
    data: Dataset,
    mu: f64,
    lipschitz: Vec<f64>,
}

impl LogRegProblem {
    pub fn new(data: Dataset, mu: f64) -> Self {
        assert!(mu >= 0.0);
        let lipschitz = data.rows().map(|r| r.norm_sq() / 4.0).collect();
        Self { data, mu, lipschitz }
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn regularizer(&self) -> L1Norm {
        L1Norm::new(self.mu)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.value(x) + self.regularizer().value(x)
    }

    /// `∇f_i(x) = −b_i a_i σ(−b_i⟨a_i, x⟩)` on the support of `a_i`.
    pub fn logreg_gradient(&self, i: usize, x: &[f64]) -> SparseGradient {
        let r = self.data.row(i);
        let c = self.coefficient(i, x);
        SparseGradient {
            indices: r.indices.to_vec(),
            values: r.values.iter().map(|a| c * a).collect(),
        }
    }

    #[inline]
    fn coefficient(&self, i: usize, x: &[f64]) -> f64 {
        let r = self.data.row(i);
        let b = r.label;
        -b * sigmoid(-b * r.dot(x))
    }
}

impl FiniteSumProblem for LogRegProblem {
    fn dim(&self) -> usize {
        self.data.num_features()
    }

    fn num_components(&self) -> usize {
        self.data.num_samples()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let r = self.data.row(i);
        logistic_loss(-r.label * r.dot(x))
    }

    fn add_component_gradient(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let c = scale * self.coefficient(i, x);
        let r = self.data.row(i);
        for (&j, &a) in r.indices.iter().zip(r.values) {
            out[j] += c * a;
        }
    }

    fn component_lipschitz(&self, i: usize) -> f64 {
        self.lipschitz[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SparseRow;
    use crate::linalg;
    use crate::oracles::full_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, n_samples: usize, n: usize) -> LogRegProblem {
        let rows = (0..n_samples)
            .map(|_| SparseRow {
                label: if rng.random::<bool>() { 1.0 } else { -1.0 },
                indices: (0..n).collect(),
                values: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            })
            .collect();
        LogRegProblem::new(Dataset::from_rows("r", rows, Some(n)).unwrap(), 0.1)
    }

    #[test]
    fn stable_loss() {
        assert!((logistic_loss(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(logistic_loss(-800.0), 0.0);
        assert_eq!(logistic_loss(800.0), 800.0);
        assert!((logistic_loss(1.3) - (1.0 + 1.3f64.exp()).ln()).abs() < 1e-14);
    }

    #[test]
    fn gradient_at_origin_and_saturation() {
        let rows = vec![SparseRow { label: -1.0, indices: vec![0, 2], values: vec![2.0, -4.0] }];
        let p = LogRegProblem::new(Dataset::from_rows("g", rows, Some(3)).unwrap(), 0.0);
        let g = p.logreg_gradient(0, &[0.0; 3]);
        assert_eq!(g.indices, vec![0, 2]);
        assert_eq!(g.values, vec![1.0, -2.0]);
        let g = p.logreg_gradient(0, &[-1e3, 0.0, 0.0]);
        assert!(g.values.iter().all(|v| v.abs() < 1e-300));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = random_problem(&mut rng, 3, 5);
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = full_gradient(&p, &x).unwrap();
            let h = 1e-6;
            let mut fd = vec![0.0; 5];
            for j in 0..5 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                fd[j] = (p.value(&xp) - p.value(&xm)) / (2.0 * h);
            }
            let err = linalg::norm(&linalg::sub(&g, &fd)) / linalg::norm(&g).max(1e-12);
            assert!(err <= 1e-6, "rel err {err}");
        }
    }

    #[test]
    fn convexity_and_lipschitz_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_problem(&mut rng, 6, 4);
        for _ in 0..200 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            assert!(p.value(&mid) <= 0.5 * (p.value(&x) + p.value(&y)) + 1e-12);
            for i in 0..6 {
                let d = linalg::sub(&p.component_gradient(i, &x), &p.component_gradient(i, &y));
                assert!(linalg::norm(&d) <= p.component_lipschitz(i) * linalg::norm(&linalg::sub(&x, &y)) + 1e-12);
            }
        }
    }
}
