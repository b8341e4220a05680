//! Attribution and preference for one pair from a single set of probes.

use crate::align::AlignedPair;
use crate::attribution::{attribution_from_probes, collect_probes, AttributionConfig, PairAttribution};
use crate::backend::ScoringBackend;
use crate::error::{BackendError, EvaluationError};
use crate::evaluation::{all_shared_indices, preference_from_probes, PairPreference};

#[derive(Debug, Clone, PartialEq)]
pub struct PairAnalysis {
    pub attribution: PairAttribution,
    pub preference: Result<PairPreference, EvaluationError>,
}

/// Probes every shared word once per sentence (two backend calls) and derives
/// both the attribution records and the sentence preference from the result.
pub fn analyze_pair<B: ScoringBackend + ?Sized>(
    aligned: &AlignedPair,
    backend: &B,
    config: &AttributionConfig,
) -> Result<PairAnalysis, BackendError> {
    let probes = collect_probes(aligned, backend, &all_shared_indices(aligned))?;
    Ok(PairAnalysis {
        attribution: attribution_from_probes(aligned, &probes, config),
        preference: preference_from_probes(aligned, &probes),
    })
}
