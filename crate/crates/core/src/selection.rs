//! Server-side selection of `J` of the `K` hypothesis spaces per client and
//! the importance-weighted loss/gradient estimators built on the selection.
//!
//! The lead index is drawn from `p`; the remaining `J - 1` indices are drawn
//! uniformly without replacement from the rest. Every index is then observed
//! with probability `((K-J)/(K-1)) p_i + (J-1)/(K-1)`.

use rand::Rng;

use crate::error::{ensure_finite, Error, Result};

/// Checks `2 ≤ J ≤ K`. The single-space case `J = K = 1` is also accepted
/// since every inclusion probability is then 1.
pub fn validate_subset_size(k: usize, j: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    if j == 1 && k == 1 {
        return Ok(());
    }
    if j < 2 || j > k {
        return Err(Error::InvalidConfig(format!(
            "subset size J = {j} must satisfy 2 <= J <= K = {k}"
        )));
    }
    Ok(())
}

/// `P[i ∈ O] = ((K-J)/(K-1)) p_i + (J-1)/(K-1)`; exactly 1 when `J = K`.
pub fn inclusion_probability(k: usize, j: usize, p_i: f64) -> f64 {
    if j >= k {
        return 1.0;
    }
    let denom = (k - 1) as f64;
    ((k - j) as f64 / denom) * p_i + (j - 1) as f64 / denom
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingOutcome {
    ordered: Vec<usize>,
    inclusion: Vec<f64>,
}

impl SamplingOutcome {
    /// Builds an outcome from an explicit index order, e.g. a decoded frame.
    pub fn from_parts(ordered: Vec<usize>, p: &[f64]) -> Result<Self> {
        let k = p.len();
        validate_subset_size(k, ordered.len())?;
        let mut seen = vec![false; k];
        for &i in &ordered {
            if i >= k || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Protocol(format!("invalid or repeated index {i}")));
            }
        }
        let j = ordered.len();
        let inclusion = p.iter().map(|&pi| inclusion_probability(k, j, pi)).collect();
        Ok(Self { ordered, inclusion })
    }

    /// `A_{t,1}`, whose model makes the prediction.
    pub fn lead(&self) -> usize {
        self.ordered[0]
    }

    /// `A_{t,1}, …, A_{t,J}` in sampling order.
    pub fn indices(&self) -> &[usize] {
        &self.ordered
    }

    pub fn inclusion_probs(&self) -> &[f64] {
        &self.inclusion
    }

    pub fn subset_size(&self) -> usize {
        self.ordered.len()
    }

    pub fn num_spaces(&self) -> usize {
        self.inclusion.len()
    }
}

/// Draws `O = {A_1, …, A_J}`: `A_1 ~ p` by inverse CDF, the rest by a
/// partial Fisher–Yates shuffle of the complement.
pub fn sample_subset<R: Rng + ?Sized>(p: &[f64], j: usize, rng: &mut R) -> Result<SamplingOutcome> {
    let k = p.len();
    validate_subset_size(k, j)?;
    ensure_finite(p, "sampling distribution")?;

    let mut total = 0.0;
    for &pi in p {
        if pi < 0.0 {
            return Err(Error::Domain(format!("negative probability {pi}")));
        }
        total += pi;
    }
    let u = rng.random::<f64>() * total;
    // first index whose running sum exceeds u
    let mut acc = 0.0;
    let lead = p
        .iter()
        .position(|&pi| {
            acc += pi;
            acc > u
        })
        .unwrap_or(k - 1);

    let mut ordered = Vec::with_capacity(j);
    ordered.push(lead);
    if j > 1 {
        let mut rest: Vec<usize> = (0..k).filter(|&i| i != lead).collect();
        for a in 0..j - 1 {
            let pick = rng.random_range(a..rest.len());
            rest.swap(a, pick);
            ordered.push(rest[a]);
        }
    }
    let inclusion = p.iter().map(|&pi| inclusion_probability(k, j, pi)).collect();
    Ok(SamplingOutcome { ordered, inclusion })
}

/// Dense `K`-vector of importance-weighted loss estimates, zero off the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateVector {
    pub values: Vec<f64>,
}

fn weight(outcome: &SamplingOutcome, i: usize) -> Result<f64> {
    let q = outcome.inclusion_probs()[i];
    if q.is_nan() || q <= 0.0 {
        return Err(Error::Domain(format!("index {i} has zero inclusion probability")));
    }
    Ok(q)
}

/// `c̃_i = c_i / P[i ∈ O]` on the sample, 0 elsewhere. `raw[a]` is the loss of
/// `indices()[a]`.
pub fn estimate_losses(raw: &[f64], outcome: &SamplingOutcome) -> Result<EstimateVector> {
    if raw.len() != outcome.subset_size() {
        return Err(Error::DimensionMismatch {
            expected: outcome.subset_size(),
            actual: raw.len(),
        });
    }
    let mut values = vec![0.0; outcome.num_spaces()];
    for (&i, &c) in outcome.indices().iter().zip(raw) {
        values[i] = c / weight(outcome, i)?;
    }
    Ok(EstimateVector { values })
}

/// Gradient estimates for the sampled spaces, in sampling order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradients {
    pub entries: Vec<(usize, Vec<f64>)>,
}

impl SparseGradients {
    pub fn get(&self, i: usize) -> Option<&[f64]> {
        self.entries
            .iter()
            .find(|(idx, _)| *idx == i)
            .map(|(_, g)| g.as_slice())
    }
}

/// `∇̃_i = ∇_i / P[i ∈ O]` on the sample, absent (zero) elsewhere.
pub fn estimate_gradients(raw: &[Vec<f64>], outcome: &SamplingOutcome) -> Result<SparseGradients> {
    if raw.len() != outcome.subset_size() {
        return Err(Error::DimensionMismatch {
            expected: outcome.subset_size(),
            actual: raw.len(),
        });
    }
    let entries = outcome
        .indices()
        .iter()
        .zip(raw)
        .map(|(&i, g)| {
            let q = weight(outcome, i)?;
            Ok((i, g.iter().map(|x| x / q).collect()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseGradients { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn subset_size_rules() {
        assert!(validate_subset_size(5, 1).is_err());
        assert!(validate_subset_size(5, 6).is_err());
        assert!(validate_subset_size(5, 2).is_ok());
        assert!(validate_subset_size(5, 5).is_ok());
        assert!(validate_subset_size(1, 1).is_ok());
    }

    #[test]
    fn full_subset_observes_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = [0.1, 0.2, 0.3, 0.4];
        let o = sample_subset(&p, 4, &mut rng).unwrap();
        let mut idx = o.indices().to_vec();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        assert!(o.inclusion_probs().iter().all(|&q| q == 1.0));
        let est = estimate_losses(&[0.5, 0.25, 1.0, 2.0], &o).unwrap();
        let mut expect = vec![0.0; 4];
        for (a, &i) in o.indices().iter().enumerate() {
            expect[i] = [0.5, 0.25, 1.0, 2.0][a];
        }
        assert_eq!(est.values, expect);
    }

    #[test]
    fn closed_form_values() {
        assert!((inclusion_probability(10, 2, 0.5) - (8.0 / 9.0 * 0.5 + 1.0 / 9.0)).abs() < 1e-15);
        assert!((inclusion_probability(5, 2, 0.2) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn estimator_divides_by_inclusion() {
        let p = [0.2; 5];
        let o = SamplingOutcome::from_parts(vec![3, 1], &p).unwrap();
        let est = estimate_losses(&[1.0, 0.4], &o).unwrap();
        assert!((est.values[3] - 2.5).abs() < 1e-15);
        assert!((est.values[1] - 1.0).abs() < 1e-15);
        assert_eq!(est.values[0], 0.0);

        let p = [0.5, 0.5 / 3.0, 0.5 / 3.0, 0.5 / 3.0];
        // K=4, J=3: P[0 ∈ O] = (1/3)·0.5 + 2/3 = 5/6
        let o = SamplingOutcome::from_parts(vec![0, 2, 3], &p).unwrap();
        let g = estimate_gradients(&[vec![2.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]], &o).unwrap();
        assert!((g.get(0).unwrap()[0] - 2.0 / (5.0 / 6.0)).abs() < 1e-12);
        assert!(g.get(1).is_none());
    }

    #[test]
    fn gradient_estimate_at_half_inclusion() {
        // K=3, J=2: P = 0.5·p_0 + 0.5, so p_0 ≈ 0 gives 0.5
        let p = [1e-300, 0.5, 0.5];
        let o = SamplingOutcome::from_parts(vec![1, 0], &p).unwrap();
        assert!((o.inclusion_probs()[0] - 0.5).abs() < 1e-15);
        let g = estimate_gradients(&[vec![1.0, 1.0], vec![2.0, 0.0]], &o).unwrap();
        assert_eq!(g.get(0).unwrap(), &[4.0, 0.0]);
    }

    #[test]
    fn repeated_indices_rejected() {
        assert!(SamplingOutcome::from_parts(vec![1, 1], &[0.5, 0.5, 0.0]).is_err());
    }

    #[test]
    fn lead_index_follows_p() {
        let p = [0.5, 0.25, 0.125, 0.125];
        let mut counts = [0usize; 4];
        let n = 200_000;
        for t in 0..n {
            let mut rng = crate::rng::sampling_stream(9, 0, t);
            counts[sample_subset(&p, 2, &mut rng).unwrap().lead()] += 1;
        }
        for (c, pi) in counts.iter().zip(p) {
            let freq = *c as f64 / n as f64;
            let sd = (pi * (1.0 - pi) / n as f64).sqrt();
            assert!((freq - pi).abs() < 4.0 * sd, "freq {freq} vs {pi}");
        }
    }

    proptest! {
        #[test]
        fn outcome_indices_are_distinct(
            (p, j) in (2usize..12).prop_flat_map(|k| (
                prop::collection::vec(0.01f64..1.0, k).prop_map(|v| {
                    let s: f64 = v.iter().sum();
                    v.into_iter().map(|x| x / s).collect::<Vec<_>>()
                }),
                2usize..=k,
            )),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let o = sample_subset(&p, j, &mut rng).unwrap();
            prop_assert_eq!(o.indices().len(), j);
            let mut idx = o.indices().to_vec();
            idx.sort_unstable();
            idx.dedup();
            prop_assert_eq!(idx.len(), j);
            let floor = (j - 1) as f64 / (p.len() - 1) as f64;
            prop_assert!(o.inclusion_probs().iter().all(|&q| q >= floor - 1e-15 && q <= 1.0 + 1e-15));
            let est = estimate_losses(&vec![1.0; j], &o).unwrap();
            let cap = (p.len() - 1) as f64 / (j - 1) as f64;
            prop_assert!(est.values.iter().all(|&v| v <= cap + 1e-12));
        }
    }
}
