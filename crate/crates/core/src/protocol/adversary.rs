//! Scripted deviations from the honest protocol.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AbortCause, PartyId, Stage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adversary {
    /// P2 replaces the k-center set with a subset violating `(d, δ)` and
    /// skips its own `d'` check.
    BobBadRepset,
    /// P2 announces `k − 1` indices.
    BobWrongK,
    /// P2 repeats an index in `I_R`.
    BobDuplicateIndices,
    /// P2 corrupts the opening randomness in its first CP proof.
    BobBadCpOpening,
    /// P2 names each challenged point as its own witness.
    BobCpForgedWitness,
    /// P2 answers the first challenge for a different index.
    BobCpWrongIndex,
    /// P2 feeds the dealer a feature vector that differs from its commitment.
    BobDealerBadX,
    /// P2 sends an altered `a_B` after committing the honest trace.
    BobForgedAb,
    /// P2 alters an activation inside its block-B audit proof.
    BobForgedBProof,
    /// P2 corrupts one label opening at the scoring step.
    BobSubscoreBadLabelRandomness,
    /// P2 permutes the representative labels at the scoring step.
    BobSubscorePermutedLabels,
    /// P2 substitutes a feature vector at the scoring step.
    BobSubscoreSubstitutedFeatures,
    /// P2 resends its Stage-0 commitments after announcing `I_R`.
    BobReplayCommitments,
    /// P2 sends an undecodable CP response.
    BobMalformedFrame,
    /// P1 feeds the dealer block-A weights that differ from `com_A`.
    AliceBadDealerWeights,
    /// P1 opens `com_C` with the wrong randomness.
    AliceBadComCOpening,
    /// P1 alters an activation inside its block-C audit proof.
    AliceForgedCProof,
    /// P1 feeds the scoring step predictions that differ from `com_{y'}`.
    AliceSubscoreBadPrediction,
    /// P1 goes silent after the challenge protocol.
    AliceEarlyTermination,
    /// P1 issues one challenge fewer than agreed.
    AliceShortChallenge,
}

pub const ADVERSARY_CATALOGUE: [Adversary; 20] = [
    Adversary::BobBadRepset,
    Adversary::BobWrongK,
    Adversary::BobDuplicateIndices,
    Adversary::BobBadCpOpening,
    Adversary::BobCpForgedWitness,
    Adversary::BobCpWrongIndex,
    Adversary::BobDealerBadX,
    Adversary::BobForgedAb,
    Adversary::BobForgedBProof,
    Adversary::BobSubscoreBadLabelRandomness,
    Adversary::BobSubscorePermutedLabels,
    Adversary::BobSubscoreSubstitutedFeatures,
    Adversary::BobReplayCommitments,
    Adversary::BobMalformedFrame,
    Adversary::AliceBadDealerWeights,
    Adversary::AliceBadComCOpening,
    Adversary::AliceForgedCProof,
    Adversary::AliceSubscoreBadPrediction,
    Adversary::AliceEarlyTermination,
    Adversary::AliceShortChallenge,
];

impl Adversary {
    pub fn party(self) -> PartyId {
        if self.name().starts_with("bob") {
            PartyId::P2
        } else {
            PartyId::P1
        }
    }

    pub fn name(self) -> &'static str {
        use Adversary::*;
        match self {
            BobBadRepset => "bob-bad-repset",
            BobWrongK => "bob-wrong-k",
            BobDuplicateIndices => "bob-duplicate-indices",
            BobBadCpOpening => "bob-bad-cp-opening",
            BobCpForgedWitness => "bob-cp-forged-witness",
            BobCpWrongIndex => "bob-cp-wrong-index",
            BobDealerBadX => "bob-dealer-bad-x",
            BobForgedAb => "bob-forged-ab",
            BobForgedBProof => "bob-forged-b-proof",
            BobSubscoreBadLabelRandomness => "bob-subscore-bad-label-randomness",
            BobSubscorePermutedLabels => "bob-subscore-permuted-labels",
            BobSubscoreSubstitutedFeatures => "bob-subscore-substituted-features",
            BobReplayCommitments => "bob-replay-commitments",
            BobMalformedFrame => "bob-malformed-frame",
            AliceBadDealerWeights => "alice-bad-dealer-weights",
            AliceBadComCOpening => "alice-bad-com-c-opening",
            AliceForgedCProof => "alice-forged-c-proof",
            AliceSubscoreBadPrediction => "alice-subscore-bad-prediction",
            AliceEarlyTermination => "alice-early-termination",
            AliceShortChallenge => "alice-short-challenge",
        }
    }

    /// Stage and cause at which the honest counterparty or dealer stops it.
    pub fn expected_abort(self) -> (Stage, AbortCause) {
        use Adversary::*;
        match self {
            BobBadRepset | BobCpForgedWitness => (Stage::Select, AbortCause::CpShortfall),
            BobWrongK | BobDuplicateIndices | BobCpWrongIndex | BobReplayCommitments | BobMalformedFrame
            | AliceShortChallenge => (Stage::Select, AbortCause::Malformed),
            BobBadCpOpening => (Stage::Select, AbortCause::CommitmentFailure),
            BobDealerBadX | AliceBadDealerWeights => (Stage::Infer, AbortCause::DealerAbort),
            BobForgedAb | BobForgedBProof | AliceForgedCProof => (Stage::Infer, AbortCause::ProofFailure),
            AliceBadComCOpening => (Stage::Infer, AbortCause::CommitmentFailure),
            BobSubscoreBadLabelRandomness
            | BobSubscorePermutedLabels
            | BobSubscoreSubstitutedFeatures
            | AliceSubscoreBadPrediction => (Stage::Score, AbortCause::DealerAbort),
            AliceEarlyTermination => (Stage::Infer, AbortCause::Timeout),
        }
    }
}

impl fmt::Display for Adversary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Adversary {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ADVERSARY_CATALOGUE
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown adversary `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip_and_are_unique() {
        let mut names: Vec<_> = ADVERSARY_CATALOGUE.iter().map(|a| a.name()).collect();
        for a in ADVERSARY_CATALOGUE {
            assert_eq!(a.name().parse::<Adversary>().unwrap(), a);
        }
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 20);
    }
}
