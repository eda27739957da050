use super::SolverError;
use serde::{Deserialize, Serialize};

/// `(√5 − 1) / 2`
pub const GOLDEN_GAMMA: f64 = 0.618_033_988_749_894_8;
pub const ADAPTIVE_MIN: f64 = 1e-3;
pub const ADAPTIVE_MAX: f64 = 1e3;
/// Weight of the new estimate in the adaptive moving average.
pub const ADAPTIVE_EMA_WEIGHT: f64 = 0.1;

/// Step sizes of one iteration: `Λ = λ⁻¹I`, `Λ₊ = λ₊⁻¹I`, and the
/// extrapolation weights `α`, `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub lambda: f64,
    pub lambda_plus: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl StepPlan {
    pub fn validate(&self) -> Result<(), SolverError> {
        let ok = self.lambda.is_finite()
            && self.lambda > 0.0
            && self.lambda_plus.is_finite()
            && self.lambda_plus > 0.0
            && self.alpha.is_finite()
            && self.alpha >= 0.0
            && self.beta.is_finite()
            && self.beta >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(SolverError::InvalidConfig(format!("invalid step plan {self:?}")))
        }
    }
}

/// Constant steps satisfying the descent-lemma conditions:
/// `λ₊ = (1 − ρ̄)/L_f`, `λ = (1 − ρ̄)λ₊ / (1 + ν̄²(α + L_f β λ₊)²)`.
/// Also returns `ρ̲ = λ/λ₊`.
pub fn policy_a_theory(l_f: f64, rho_bar: f64, nu_bar: f64, alpha: f64, beta: f64) -> (StepPlan, f64) {
    let lambda_plus = (1.0 - rho_bar) / l_f;
    let s = alpha + l_f * beta * lambda_plus;
    let lambda = (1.0 - rho_bar) * lambda_plus / (1.0 + nu_bar * nu_bar * s * s);
    let plan = StepPlan {
        lambda,
        lambda_plus,
        alpha,
        beta,
    };
    (plan, lambda / lambda_plus)
}

/// `λ₊ = 1/(6L_f√(k+1))`, `β = 1/(9L_f ν̄)`, `α = L_f β λ₊`, `λ = λ₊`.
pub fn policy_b_decaying_alpha(l_f: f64, nu_bar: f64, k: usize) -> StepPlan {
    let lambda_plus = 1.0 / (6.0 * l_f * ((k + 1) as f64).sqrt());
    let beta = 1.0 / (9.0 * l_f * nu_bar);
    StepPlan {
        lambda: lambda_plus,
        lambda_plus,
        alpha: l_f * beta * lambda_plus,
        beta,
    }
}

/// Smallest `k` with `k³ ≥ n`, in exact integer arithmetic.
pub fn ceil_cbrt(n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let mut k = (n as f64).cbrt().round() as usize;
    while k.saturating_mul(k).saturating_mul(k) < n {
        k += 1;
    }
    while k > 1 && (k - 1) * (k - 1) * (k - 1) >= n {
        k -= 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyCParams {
    pub inner_iterations: usize,
    pub batch: usize,
    pub batch_plus: usize,
    pub plan: StepPlan,
}

/// `K = ⌈N^{1/3}⌉`, `b = b₊ = K²` (at most `N`), `λ₊ = γ/L`,
/// `λ = γ / (L(1 + 3ν̄²))` with `α = β = 1`.
pub fn policy_c_params(n: usize, l: f64, nu_bar: f64) -> PolicyCParams {
    let k = ceil_cbrt(n).max(1);
    let b = (k * k).min(n).max(1);
    PolicyCParams {
        inner_iterations: k,
        batch: b,
        batch_plus: b,
        plan: StepPlan {
            lambda: GOLDEN_GAMMA / (l * (1.0 + 3.0 * nu_bar * nu_bar)),
            lambda_plus: GOLDEN_GAMMA / l,
            alpha: 1.0,
            beta: 1.0,
        },
    }
}

/// Initial adaptive plan from a Lipschitz estimate.
pub fn adaptive_initial(l_hat: f64) -> StepPlan {
    let lambda_plus = 1.0 / l_hat;
    StepPlan {
        lambda: 0.5 * lambda_plus,
        lambda_plus,
        alpha: 1.0,
        beta: 1.0,
    }
}

/// Local step estimate from the latest pair:
/// `λ¹ = ‖u‖ min{1, λ} / ‖y‖`, clamped, then averaged into `λ₊`.
/// The plan is returned unchanged when `u = 0` or `y = 0`.
pub fn policy_adaptive(prev: &StepPlan, u_norm: f64, y_norm: f64) -> StepPlan {
    if !(u_norm > 0.0) || !(y_norm > 0.0) || !u_norm.is_finite() || !y_norm.is_finite() {
        return *prev;
    }
    let raw = u_norm * prev.lambda.min(1.0) / y_norm;
    let clamped = raw.clamp(ADAPTIVE_MIN, ADAPTIVE_MAX);
    let lambda_plus = (1.0 - ADAPTIVE_EMA_WEIGHT) * prev.lambda_plus + ADAPTIVE_EMA_WEIGHT * clamped;
    StepPlan {
        lambda: 0.5 * lambda_plus,
        lambda_plus,
        alpha: 1.0,
        beta: 1.0,
    }
}
