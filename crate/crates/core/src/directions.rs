//! Quasi-Newton directions `d = −W r` built from curvature pairs: the
//! limited-memory BFGS inverse update, its coordinate-block variant and the
//! plain identity.

use crate::linalg;
use std::collections::VecDeque;
use thiserror::Error;

pub const DEFAULT_MEMORY: usize = 10;
pub const DEFAULT_CURVATURE_DELTA: f64 = 1e-4;
pub const DEFAULT_DELTA1: f64 = 1e-4;
pub const DEFAULT_DELTA2: f64 = 1e-6;
const DENOM_GUARD: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DirectionError {
    #[error("{generator} produced a non-finite direction")]
    NonFinite { generator: &'static str },
    #[error("{generator} direction norm {norm} exceeds certified bound {bound}")]
    CertificateViolated {
        generator: &'static str,
        norm: f64,
        bound: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePair {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

/// FIFO of at most `memory` accepted pairs, oldest first.
#[derive(Debug, Clone)]
pub struct CurvatureBuffer {
    pairs: VecDeque<CurvaturePair>,
    memory: usize,
    delta: f64,
}

impl CurvatureBuffer {
    pub fn new(memory: usize, delta: f64) -> Self {
        assert!(memory > 0, "memory must be positive");
        assert!(delta > 0.0, "curvature threshold must be positive");
        Self {
            pairs: VecDeque::with_capacity(memory),
            memory,
            delta,
        }
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &CurvaturePair> {
        self.pairs.iter()
    }

    pub fn newest(&self) -> Option<&CurvaturePair> {
        self.pairs.back()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    pub fn try_push(&mut self, u: &[f64], y: &[f64]) -> bool {
        assert_eq!(u.len(), y.len(), "pair dimensions differ");
        if linalg::is_zero(u) {
            return false;
        }
        let uy = linalg::dot(u, y);
        let yy = linalg::dot(y, y);
        if !(uy >= self.delta * linalg::norm_sq(u)) || uy < DENOM_GUARD || yy < DENOM_GUARD {
            return false;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back(CurvaturePair {
            u: u.to_vec(),
            y: y.to_vec(),
        });
        true
    }
}

/// Appends `(u, y)` iff `u ≠ 0` and `⟨u, y⟩ ≥ δ‖u‖²`.
pub fn try_push_pair(buffer: &mut CurvatureBuffer, u: &[f64], y: &[f64]) -> bool {
    buffer.try_push(u, y)
}

/// `⟨u, y⟩ / ⟨y, y⟩` of the newest pair, or 1 for an empty buffer.
pub fn lbfgs_gamma(buffer: &CurvatureBuffer) -> f64 {
    match buffer.newest() {
        Some(p) => linalg::dot(&p.u, &p.y) / linalg::dot(&p.y, &p.y),
        None => 1.0,
    }
}

/// Two-loop recursion for `W r`, pairs ordered oldest to newest.
fn two_loop(us: &[&[f64]], ys: &[&[f64]], rhos: &[f64], gamma: f64, r: &[f64]) -> Vec<f64> {
    let m = us.len();
    let mut q = r.to_vec();
    let mut a = vec![0.0; m];
    for i in (0..m).rev() {
        a[i] = rhos[i] * linalg::dot(us[i], &q);
        linalg::axpy(-a[i], ys[i], &mut q);
    }
    linalg::scale(gamma, &mut q);
    for i in 0..m {
        let b = rhos[i] * linalg::dot(ys[i], &q);
        linalg::axpy(a[i] - b, us[i], &mut q);
    }
    q
}

/// `W r` with `W⁰ = γI` and `W ← (I − ρuyᵀ) W (I − ρyuᵀ) + ρuuᵀ` over the
/// buffer, evaluated matrix-free.
pub fn lbfgs_apply(buffer: &CurvatureBuffer, r: &[f64]) -> Vec<f64> {
    if buffer.is_empty() {
        return r.to_vec();
    }
    let us: Vec<&[f64]> = buffer.pairs().map(|p| p.u.as_slice()).collect();
    let ys: Vec<&[f64]> = buffer.pairs().map(|p| p.y.as_slice()).collect();
    let rhos: Vec<f64> = buffer.pairs().map(|p| 1.0 / linalg::dot(&p.y, &p.u)).collect();
    two_loop(&us, &ys, &rhos, lbfgs_gamma(buffer), r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinatePartition {
    pub active: Vec<usize>,
    pub complement: Vec<usize>,
    pub zeta: f64,
}

/// `I = {i : |r_i| ≥ δ₂}` and its complement, with `ζ = 1`.
pub fn coordinate_partition(residual: &[f64], delta2: f64) -> CoordinatePartition {
    assert!(delta2 > 0.0);
    let mut active = Vec::new();
    let mut complement = Vec::new();
    for (i, r) in residual.iter().enumerate() {
        if r.abs() >= delta2 {
            active.push(i);
        } else {
            complement.push(i);
        }
    }
    CoordinatePartition {
        active,
        complement,
        zeta: 1.0,
    }
}

fn gather(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Block direction: L-BFGS on `I` with the pairs restricted to `I` that keep
/// `|⟨u_I, y_I⟩| ≥ δ₁‖u‖²`, and `ζ r_A` on the complement. Falls back to the
/// full recursion when `I` or the qualifying pair set is empty.
pub fn coord_lbfgs_apply(
    buffer: &CurvatureBuffer,
    partition: &CoordinatePartition,
    residual: &[f64],
    delta1: f64,
) -> Vec<f64> {
    let idx = &partition.active;
    if idx.is_empty() {
        return lbfgs_apply(buffer, residual);
    }
    let mut us = Vec::new();
    let mut ys = Vec::new();
    let mut rhos = Vec::new();
    for p in buffer.pairs() {
        let u_i = gather(&p.u, idx);
        let y_i = gather(&p.y, idx);
        let uy = linalg::dot(&u_i, &y_i);
        let yy = linalg::dot(&y_i, &y_i);
        if uy.abs() >= delta1 * linalg::norm_sq(&p.u) && uy.abs() >= DENOM_GUARD && yy >= DENOM_GUARD {
            rhos.push(1.0 / linalg::dot(&y_i, &u_i));
            us.push(u_i);
            ys.push(y_i);
        }
    }
    if us.is_empty() {
        return lbfgs_apply(buffer, residual);
    }
    let last = us.len() - 1;
    let gamma = linalg::dot(&us[last], &ys[last]) / linalg::dot(&ys[last], &ys[last]);
    let u_refs: Vec<&[f64]> = us.iter().map(|v| v.as_slice()).collect();
    let y_refs: Vec<&[f64]> = ys.iter().map(|v| v.as_slice()).collect();
    let w_r = two_loop(&u_refs, &y_refs, &rhos, gamma, &gather(residual, idx));
    let mut out = vec![0.0; residual.len()];
    for (k, &i) in idx.iter().enumerate() {
        out[i] = w_r[k];
    }
    for &i in &partition.complement {
        out[i] = partition.zeta * residual[i];
    }
    out
}

/// Upper bound on `‖W‖` for block L-BFGS matrices built from pairs with
/// `‖y‖ ≤ (2 + ℓ̄)‖u‖`:
/// `max(ζ̄, ((2+ℓ̄+δ₁)/δ₁)^{2(p+2)} − 1) / (2+ℓ̄))`.
pub fn nu_bar_bound(p: usize, delta1: f64, ell_bar: f64, zeta_bar: f64) -> f64 {
    let ratio = (2.0 + ell_bar + delta1) / delta1;
    let exponent = 2.0 * (p as f64 + 2.0);
    let bound = (ratio.powf(exponent) - 1.0) / (2.0 + ell_bar);
    if !bound.is_finite() {
        log::warn!("norm certificate overflows for p={p}, delta1={delta1}, ell_bar={ell_bar}");
        return f64::INFINITY;
    }
    bound.max(zeta_bar)
}

/// Produces `W r` for the current residual and learns from curvature pairs.
pub trait DirectionGenerator: Send {
    fn name(&self) -> &'static str;

    fn apply(&self, residual: &[f64]) -> Vec<f64>;

    /// Offers a pair; returns whether it was stored.
    fn notify_pair(&mut self, u: &[f64], y: &[f64]) -> bool;

    /// A `ν̄` with `‖apply(r)‖ ≤ ν̄‖r‖`.
    fn certificate_bound(&self) -> f64;

    fn wants_pairs(&self) -> bool {
        true
    }

    fn reset(&mut self);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDirection;

impl DirectionGenerator for IdentityDirection {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn apply(&self, residual: &[f64]) -> Vec<f64> {
        residual.to_vec()
    }

    fn notify_pair(&mut self, _u: &[f64], _y: &[f64]) -> bool {
        false
    }

    fn certificate_bound(&self) -> f64 {
        1.0
    }

    fn wants_pairs(&self) -> bool {
        false
    }

    fn reset(&mut self) {}
}

/// Tracks the largest `max(0, ‖y‖/‖u‖ − 2)` seen among stored pairs, which
/// is the `ℓ̄` the norm certificate needs.
#[derive(Debug, Clone, Default)]
struct EllBar {
    configured: f64,
    observed: f64,
}

impl EllBar {
    fn record(&mut self, u: &[f64], y: &[f64]) {
        let ratio = linalg::norm(y) / linalg::norm(u);
        self.observed = self.observed.max(ratio - 2.0);
    }

    fn value(&self) -> f64 {
        self.configured.max(self.observed).max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsDirection {
    buffer: CurvatureBuffer,
    ell_bar: EllBar,
}

impl LbfgsDirection {
    pub fn new(memory: usize, delta: f64) -> Self {
        Self {
            buffer: CurvatureBuffer::new(memory, delta),
            ell_bar: EllBar::default(),
        }
    }

    /// Sets the a-priori `ℓ̄` (e.g. step-size cap times the Lipschitz constant).
    pub fn with_ell_bar(mut self, ell_bar: f64) -> Self {
        self.ell_bar.configured = ell_bar;
        self
    }

    pub fn buffer(&self) -> &CurvatureBuffer {
        &self.buffer
    }

    pub fn ell_bar(&self) -> f64 {
        self.ell_bar.value()
    }
}

impl Default for LbfgsDirection {
    fn default() -> Self {
        Self::new(DEFAULT_MEMORY, DEFAULT_CURVATURE_DELTA)
    }
}

impl DirectionGenerator for LbfgsDirection {
    fn name(&self) -> &'static str {
        "lbfgs"
    }

    fn apply(&self, residual: &[f64]) -> Vec<f64> {
        lbfgs_apply(&self.buffer, residual)
    }

    fn notify_pair(&mut self, u: &[f64], y: &[f64]) -> bool {
        let accepted = self.buffer.try_push(u, y);
        if accepted {
            self.ell_bar.record(u, y);
        }
        accepted
    }

    fn certificate_bound(&self) -> f64 {
        if self.buffer.is_empty() {
            return 1.0;
        }
        nu_bar_bound(self.buffer.memory(), self.buffer.delta(), self.ell_bar.value(), 1.0)
    }

    fn reset(&mut self) {
        self.buffer.clear();
        self.ell_bar.observed = 0.0;
    }
}

#[derive(Debug, Clone)]
pub struct CoordLbfgsDirection {
    buffer: CurvatureBuffer,
    delta1: f64,
    delta2: f64,
    zeta: f64,
    ell_bar: EllBar,
}

impl CoordLbfgsDirection {
    pub fn new(memory: usize, delta: f64, delta1: f64, delta2: f64, zeta: f64) -> Self {
        assert!(zeta > 0.0);
        Self {
            buffer: CurvatureBuffer::new(memory, delta),
            delta1,
            delta2,
            zeta,
            ell_bar: EllBar::default(),
        }
    }

    pub fn with_ell_bar(mut self, ell_bar: f64) -> Self {
        self.ell_bar.configured = ell_bar;
        self
    }

    pub fn buffer(&self) -> &CurvatureBuffer {
        &self.buffer
    }
}

impl Default for CoordLbfgsDirection {
    fn default() -> Self {
        Self::new(
            DEFAULT_MEMORY,
            DEFAULT_CURVATURE_DELTA,
            DEFAULT_DELTA1,
            DEFAULT_DELTA2,
            1.0,
        )
    }
}

impl DirectionGenerator for CoordLbfgsDirection {
    fn name(&self) -> &'static str {
        "coord-lbfgs"
    }

    fn apply(&self, residual: &[f64]) -> Vec<f64> {
        let mut part = coordinate_partition(residual, self.delta2);
        part.zeta = self.zeta;
        coord_lbfgs_apply(&self.buffer, &part, residual, self.delta1)
    }

    fn notify_pair(&mut self, u: &[f64], y: &[f64]) -> bool {
        let accepted = self.buffer.try_push(u, y);
        if accepted {
            self.ell_bar.record(u, y);
        }
        accepted
    }

    fn certificate_bound(&self) -> f64 {
        if self.buffer.is_empty() {
            return 1.0;
        }
        // The full-space fallback uses the curvature threshold δ instead of δ₁.
        let ell = self.ell_bar.value();
        let m = self.buffer.memory();
        nu_bar_bound(m, self.delta1, ell, self.zeta).max(nu_bar_bound(m, self.buffer.delta(), ell, 1.0))
    }

    fn reset(&mut self) {
        self.buffer.clear();
        self.ell_bar.observed = 0.0;
    }
}

/// `d = −W r`, checked for finiteness and against the generator's bound.
pub fn direction(generator: &dyn DirectionGenerator, residual: &[f64]) -> Result<Vec<f64>, DirectionError> {
    let mut d = generator.apply(residual);
    linalg::scale(-1.0, &mut d);
    if !linalg::all_finite(&d) {
        return Err(DirectionError::NonFinite {
            generator: generator.name(),
        });
    }
    let bound = generator.certificate_bound();
    let norm = linalg::norm(&d);
    if norm > bound * linalg::norm(residual) * (1.0 + 1e-12) {
        return Err(DirectionError::CertificateViolated {
            generator: generator.name(),
            norm,
            bound,
        });
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_rules() {
        let mut b = CurvatureBuffer::new(2, 1e-4);
        assert!(b.try_push(&[1.0, 2.0], &[1.0, 2.0]));
        assert!(!b.try_push(&[1.0, 2.0], &[-1.0, -2.0]));
        assert!(!b.try_push(&[0.0, 0.0], &[0.0, 0.0]));
        assert!(b.try_push(&[1.0, 0.0], &[2.0, 0.0]));
        assert!(b.try_push(&[0.0, 1.0], &[0.0, 3.0]));
        assert_eq!(b.len(), 2);
        assert_eq!(b.pairs().next().unwrap().u, vec![1.0, 0.0]);
    }

    #[test]
    fn gamma_examples() {
        let mut b = CurvatureBuffer::new(3, 1e-4);
        assert_eq!(lbfgs_gamma(&b), 1.0);
        b.try_push(&[1.0, 2.0], &[1.0, 2.0]);
        assert_eq!(lbfgs_gamma(&b), 1.0);
        b.try_push(&[2.0, -4.0], &[1.0, -2.0]);
        assert_eq!(lbfgs_gamma(&b), 2.0);
        b.try_push(&[0.3, 0.1], &[0.2, 0.5]);
        let direct = (0.3 * 0.2 + 0.1 * 0.5) / (0.2 * 0.2 + 0.5 * 0.5);
        assert_eq!(lbfgs_gamma(&b), direct);
    }

    #[test]
    fn empty_and_unit_pair_give_identity() {
        let r = [0.5, -1.5, 2.0];
        let mut b = CurvatureBuffer::new(4, 1e-4);
        assert_eq!(lbfgs_apply(&b, &r), r.to_vec());
        b.try_push(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]);
        let w = lbfgs_apply(&b, &r);
        for i in 0..3 {
            assert!((w[i] - r[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn partition_examples() {
        let p = coordinate_partition(&[0.5, 1e-8, -0.2], 1e-6);
        assert_eq!(p.active, vec![0, 2]);
        assert_eq!(p.complement, vec![1]);
        let p = coordinate_partition(&[1e-9, -1e-7], 1e-6);
        assert!(p.active.is_empty());
        let p = coordinate_partition(&[1.0, -1.0], 1e-6);
        assert_eq!(p.active, vec![0, 1]);
        assert!(p.complement.is_empty());
    }

    #[test]
    fn coordinate_full_set_is_bitwise_lbfgs() {
        let mut b = CurvatureBuffer::new(3, 1e-4);
        b.try_push(&[1.0, 0.2, -0.3], &[0.9, 0.5, -0.1]);
        b.try_push(&[-0.4, 1.0, 0.1], &[-0.2, 1.3, 0.4]);
        let r = [0.3, -0.8, 1.1];
        let part = coordinate_partition(&r, 1e-6);
        assert_eq!(coord_lbfgs_apply(&b, &part, &r, 1e-4), lbfgs_apply(&b, &r));
    }

    #[test]
    fn coordinate_empty_active_set_falls_back() {
        let mut b = CurvatureBuffer::new(3, 1e-4);
        b.try_push(&[1.0, 0.5], &[2.0, 0.1]);
        let r = [1e-9, -1e-8];
        let part = coordinate_partition(&r, 1e-6);
        assert_eq!(coord_lbfgs_apply(&b, &part, &r, 1e-4), lbfgs_apply(&b, &r));
    }

    #[test]
    fn coordinate_no_qualifying_pair_falls_back() {
        let mut b = CurvatureBuffer::new(3, 1e-4);
        // All curvature lives on coordinate 1, which is not active.
        b.try_push(&[0.0, 1.0], &[0.0, 2.0]);
        let r = [1.0, 1e-9];
        let part = coordinate_partition(&r, 1e-6);
        assert_eq!(part.active, vec![0]);
        assert_eq!(coord_lbfgs_apply(&b, &part, &r, 1e-4), lbfgs_apply(&b, &r));
    }

    #[test]
    fn nu_bar_examples() {
        assert_eq!(nu_bar_bound(1, 1.0, 0.0, 1.0), 364.0);
        assert_eq!(nu_bar_bound(1, 1.0, 0.0, 1e6), 1e6);
        assert_eq!(nu_bar_bound(200, 1e-8, 0.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn identity_direction_negates() {
        let r = [1.0, -2.0];
        assert_eq!(direction(&IdentityDirection, &r).unwrap(), vec![-1.0, 2.0]);
        let zero = [0.0, 0.0];
        let g = LbfgsDirection::default();
        assert!(linalg::is_zero(&direction(&g, &zero).unwrap()));
    }

    #[test]
    fn lbfgs_direction_matches_apply() {
        let mut g = LbfgsDirection::new(5, 1e-4);
        assert!(g.notify_pair(&[1.0, 0.5], &[2.0, 0.3]));
        assert!(g.notify_pair(&[0.2, -1.0], &[0.1, -1.5]));
        let r = [0.7, 0.1];
        let d = direction(&g, &r).unwrap();
        let w = lbfgs_apply(g.buffer(), &r);
        assert_eq!(d, vec![-w[0], -w[1]]);
        assert!(linalg::dot(&d, &r) < 0.0);
        assert!(g.ell_bar() >= 0.0);
        g.reset();
        assert!(g.buffer().is_empty());
    }
}
