use super::SolverError;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

/// `(ψ − ψ*) / max(1, |ψ*|)`; may be slightly negative.
pub fn rel_err(psi: f64, psi_star: f64) -> f64 {
    (psi - psi_star) / psi_star.abs().max(1.0)
}

/// [`rel_err`] clamped at zero, for summaries.
pub fn rel_err_clamped(psi: f64, psi_star: f64) -> f64 {
    rel_err(psi, psi_star).max(0.0)
}

/// Draws an index with probability proportional to `weights`.
pub fn sample_output<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize, SolverError> {
    if weights.is_empty() {
        return Err(SolverError::EmptyHistory);
    }
    let dist = WeightedIndex::new(weights).map_err(|e| SolverError::InvalidConfig(format!("output weights: {e}")))?;
    Ok(dist.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relative_error_floor() {
        assert_eq!(rel_err(0.5, 0.25), 0.25);
        assert_eq!(rel_err(12.0, 10.0), 0.2);
        assert!(rel_err(0.25 - 1e-16, 0.25) < 0.0);
        assert_eq!(rel_err_clamped(0.25 - 1e-16, 0.25), 0.0);
    }

    #[test]
    fn weighted_output_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = [1.0, 3.0, 0.0, 4.0];
        let mut counts = [0usize; 4];
        for _ in 0..80_000 {
            counts[sample_output(&w, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[2], 0);
        for (c, wi) in counts.iter().zip(w) {
            let p = wi / 8.0;
            assert!((*c as f64 / 80_000.0 - p).abs() < 0.01);
        }
        assert!(sample_output(&[], &mut rng).is_err());
    }
}
