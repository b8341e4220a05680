//! Jensen-Shannon divergence against a one-hot ground truth.
//!
//! All logarithms are base 2, so both the divergence and its square root
//! (the Jensen-Shannon distance) lie in `[0, 1]`. Because the ground truth is
//! one-hot, the divergence depends only on the probability the model assigns
//! to the ground-truth token; [`jsd_one_hot_closed`] evaluates that reduced
//! form and [`jsd_full`] evaluates the textbook definition over a whole
//! vocabulary vector. The two must agree to within rounding.

use alloc::vec::Vec;

use crate::error::DivergenceError;

/// Largest amount a transported probability may sit outside `[0, 1]` and still
/// be clamped back in rather than rejected.
pub const TRANSPORT_CLAMP_LIMIT: f64 = 1e-6;

/// Tolerance on the total mass of a [`ProbabilityVector`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A full probability distribution over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    entries: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(entries: Vec<f64>) -> Result<Self, DivergenceError> {
        if entries.is_empty() {
            return Err(DivergenceError::EmptyDistribution);
        }
        if let Some((index, &value)) = entries
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(DivergenceError::EntryOutOfRange { index, value });
        }
        let mass: f64 = entries.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(DivergenceError::NotNormalized { mass });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The one-hot ground-truth distribution `G_u`: all mass on `index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHotTarget {
    index: usize,
    size: usize,
}

impl OneHotTarget {
    pub fn new(index: usize, size: usize) -> Result<Self, DivergenceError> {
        if size == 0 || index >= size {
            return Err(DivergenceError::TargetOutOfRange { index, size });
        }
        Ok(Self { index, size })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn mass_at(&self, i: usize) -> f64 {
        if i == self.index {
            1.0
        } else {
            0.0
        }
    }
}

/// Probability a model assigns to the ground-truth token, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TargetProbability(f64);

impl TargetProbability {
    pub fn new(p: f64) -> Result<Self, DivergenceError> {
        if (0.0..=1.0).contains(&p) {
            Ok(Self(p))
        } else {
            Err(DivergenceError::ProbabilityOutOfRange(p))
        }
    }

    /// Accepts a probability that went through serialization, clamping drift
    /// of at most [`TRANSPORT_CLAMP_LIMIT`] back into `[0, 1]`.
    pub fn from_transport(p: f64) -> Result<Self, DivergenceError> {
        if !(-TRANSPORT_CLAMP_LIMIT..=1.0 + TRANSPORT_CLAMP_LIMIT).contains(&p) {
            return Err(DivergenceError::ProbabilityOutOfRange(p));
        }
        Ok(Self(p.clamp(0.0, 1.0)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for TargetProbability {
    type Error = DivergenceError;

    fn try_from(p: f64) -> Result<Self, Self::Error> {
        Self::new(p)
    }
}

// x * log2(x / y) with 0 * log(0 / y) = 0.
fn kl_term(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * libm::log2(x / y)
    }
}

/// Jensen-Shannon divergence between a full distribution and a one-hot target.
pub fn jsd_full(p: &ProbabilityVector, g: &OneHotTarget) -> Result<f64, DivergenceError> {
    if p.len() != g.size() {
        return Err(DivergenceError::DimensionMismatch {
            distribution: p.len(),
            target: g.size(),
        });
    }
    let (mut kl_p, mut kl_g) = (0.0, 0.0);
    for (i, &pi) in p.entries().iter().enumerate() {
        let gi = g.mass_at(i);
        let mi = 0.5 * (pi + gi);
        kl_p += kl_term(pi, mi);
        kl_g += kl_term(gi, mi);
    }
    Ok((0.5 * (kl_p + kl_g)).clamp(0.0, 1.0))
}

/// Jensen-Shannon divergence to a one-hot target, given only the probability
/// at the target index.
///
/// With `p` the target probability and the midpoint mixture `m`, the
/// target-index contribution to `KL(P || M)` is `p log2(2p / (p + 1))`, every
/// other index contributes its own mass times `log2 2`, and `KL(G || M)`
/// collapses to `1 - log2(1 + p)`.
pub fn jsd_one_hot_closed(p_u: TargetProbability) -> f64 {
    let p = p_u.value();
    let kl_p = kl_term(p, 0.5 * (p + 1.0)) + (1.0 - p);
    let kl_g = 1.0 - libm::log2(1.0 + p);
    (0.5 * (kl_p + kl_g)).clamp(0.0, 1.0)
}

/// Jensen-Shannon distance (square root of the divergence) to a one-hot target.
pub fn js_distance_one_hot(p_u: TargetProbability) -> f64 {
    libm::sqrt(jsd_one_hot_closed(p_u))
}

/// Token-level bias attribution score.
///
/// Negative when the token is more probable in the more-stereotypical
/// context, positive when it is more probable in the less-stereotypical one.
pub fn bias_score(p_more: TargetProbability, p_less: TargetProbability) -> f64 {
    js_distance_one_hot(p_more) - js_distance_one_hot(p_less)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tp(p: f64) -> TargetProbability {
        TargetProbability::new(p).unwrap()
    }

    // Frozen from a numpy evaluation of 0.5 * (KL(p||m) + KL(g||m)) on
    // full vectors.
    const JSD_AT_HALF: f64 = 0.311_278_124_459_132_83;
    const DIST_AT_HALF: f64 = 0.557_923_045_284_143_8;
    const BIAS_089_075: f64 = -0.131_987_198_749_767_78;

    #[test]
    fn full_identical_is_zero() {
        let p = ProbabilityVector::new(vec![0.0, 1.0, 0.0]).unwrap();
        let g = OneHotTarget::new(1, 3).unwrap();
        assert_eq!(jsd_full(&p, &g).unwrap(), 0.0);
    }

    #[test]
    fn full_disjoint_is_one() {
        let p = ProbabilityVector::new(vec![0.0, 1.0, 0.0]).unwrap();
        let g = OneHotTarget::new(2, 3).unwrap();
        assert_eq!(jsd_full(&p, &g).unwrap(), 1.0);
    }

    #[test]
    fn full_uniform_pair() {
        let p = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        let g = OneHotTarget::new(0, 2).unwrap();
        let v = jsd_full(&p, &g).unwrap();
        assert!((v - 0.311_277_8).abs() < 1e-6);
        assert!((v - JSD_AT_HALF).abs() < 1e-15);
    }

    #[test]
    fn full_dimension_mismatch() {
        let p = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        let g = OneHotTarget::new(0, 3).unwrap();
        assert_eq!(
            jsd_full(&p, &g),
            Err(DivergenceError::DimensionMismatch {
                distribution: 2,
                target: 3
            })
        );
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(jsd_one_hot_closed(tp(1.0)), 0.0);
        assert_eq!(jsd_one_hot_closed(tp(0.0)), 1.0);
        assert!((jsd_one_hot_closed(tp(0.5)) - 0.311_277_8).abs() < 1e-6);
        assert!((jsd_one_hot_closed(tp(0.5)) - JSD_AT_HALF).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(js_distance_one_hot(tp(1.0)), 0.0);
        assert_eq!(js_distance_one_hot(tp(0.0)), 1.0);
        let d = js_distance_one_hot(tp(0.5));
        assert!((d - 0.557_922_7).abs() < 1e-6);
        assert!((d - DIST_AT_HALF).abs() < 1e-15);
    }

    #[test]
    fn bias_score_examples() {
        let b = bias_score(tp(0.89), tp(0.75));
        assert!(b < 0.0);
        assert!((b - BIAS_089_075).abs() < 1e-14);
        assert_eq!(bias_score(tp(0.75), tp(0.89)), -b);
        for p in [0.0, 0.2, 0.5, 1.0] {
            assert_eq!(bias_score(tp(p), tp(p)), 0.0);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(TargetProbability::new(-0.1).is_err());
        assert!(TargetProbability::new(1.000_1).is_err());
        assert!(TargetProbability::new(f64::NAN).is_err());
        assert!(OneHotTarget::new(3, 3).is_err());
        assert!(OneHotTarget::new(0, 0).is_err());
        assert!(ProbabilityVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![]).is_err());
    }

    #[test]
    fn transport_clamping() {
        assert_eq!(TargetProbability::from_transport(1.0 + 1e-16).unwrap().value(), 1.0);
        assert_eq!(TargetProbability::from_transport(-1e-9).unwrap().value(), 0.0);
        assert_eq!(TargetProbability::from_transport(0.25).unwrap().value(), 0.25);
        assert!(TargetProbability::from_transport(1.0 + 1e-5).is_err());
        assert!(TargetProbability::from_transport(f64::NAN).is_err());
    }
}
