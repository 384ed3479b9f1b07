//! Hypergeometric detection bound for cut-and-choose audits, its inverse, and Monte-Carlo cross-checks.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AuditError;

/// Audit `m` of `n` points and `s` of `l` layers per audited point, against
/// a prover corrupting a `rho` fraction of points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditPlan {
    pub n: usize,
    pub l: usize,
    pub m: usize,
    pub s: usize,
    pub rho: f64,
}

impl AuditPlan {
    pub fn validate(&self) -> Result<(), AuditError> {
        let ok = self.n >= 1
            && self.l >= 1
            && (1..=self.n).contains(&self.m)
            && (1..=self.l).contains(&self.s)
            && (0.0..=1.0).contains(&self.rho);
        if ok {
            Ok(())
        } else {
            Err(AuditError::PlanInvalid(format!("{self:?}")))
        }
    }

    /// `floor(N·ρ)`.
    pub fn corrupted(&self) -> usize {
        corrupted_points(self.n, self.rho)
    }

    /// Share of layer evaluations audited, `m·s / (N·L)`.
    pub fn audit_fraction(&self) -> BigRational {
        BigRational::new(BigInt::from(self.m * self.s), BigInt::from(self.n * self.l))
    }
}

pub fn corrupted_points(n: usize, rho: f64) -> usize {
    ((n as f64 * rho) + 1e-9).floor().min(n as f64) as usize
}

fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    (0..k).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i) / BigInt::from(i + 1))
}

/// Exact detection probability
/// `Σ_k C(K,k)·C(N−K,m−k)/C(N,m) · (1 − ((L−s)/L)^k)` with `K = floor(Nρ)`.
pub fn detection_probability_exact(plan: &AuditPlan) -> Result<BigRational, AuditError> {
    plan.validate()?;
    let AuditPlan { n, l, m, s, .. } = *plan;
    let big_k = plan.corrupted();
    let total = binomial(n, m);
    let miss = BigRational::new(BigInt::from(l - s), BigInt::from(l));
    let mut sum = BigRational::zero();
    let mut miss_pow = BigRational::one();
    for k in 0..=big_k.min(m) {
        if k > 0 {
            miss_pow *= &miss;
        }
        let ways = binomial(big_k, k) * binomial(n - big_k, m - k);
        if ways.is_zero() {
            continue;
        }
        sum += BigRational::new(ways, total.clone()) * (BigRational::one() - &miss_pow);
    }
    Ok(sum)
}

pub fn detection_probability(plan: &AuditPlan) -> Result<f64, AuditError> {
    Ok(detection_probability_exact(plan)?.to_f64().unwrap_or(f64::NAN))
}

/// Minimal `m·s` (then minimal `m`) reaching `target`.
pub fn plan_audit(n: usize, l: usize, rho: f64, target: f64) -> Result<AuditPlan, AuditError> {
    if !(0.0..1.0).contains(&target) {
        return Err(AuditError::PlanInvalid(format!("target {target} outside [0, 1)")));
    }
    let goal = BigRational::from_float(target).expect("finite target");
    let reaches = |m: usize, s: usize| -> Result<bool, AuditError> {
        Ok(detection_probability_exact(&AuditPlan { n, l, m, s, rho })? >= goal)
    };
    AuditPlan { n, l, m: 1, s: 1, rho }.validate()?;
    let mut best: Option<AuditPlan> = None;
    for s in 1..=l {
        if !reaches(n, s)? {
            continue;
        }
        let (mut lo, mut hi) = (1, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if reaches(mid, s)? {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let cand = AuditPlan { n, l, m: lo, s, rho };
        let better = match best {
            None => true,
            Some(b) => (cand.m * cand.s, cand.m) < (b.m * b.s, b.m),
        };
        if better {
            best = Some(cand);
        }
    }
    best.ok_or(AuditError::Unachievable)
}

/// Monte-Carlo detection rate against a prover that corrupts `floor(Nρ)`
/// points with one bad layer each.
pub fn simulate_detection<R: Rng + ?Sized>(plan: &AuditPlan, trials: usize, rng: &mut R) -> Result<f64, AuditError> {
    plan.validate()?;
    let corrupted = plan.corrupted();
    let mut caught = 0usize;
    for _ in 0..trials {
        let bad: Vec<usize> = sample(rng, plan.n, corrupted).into_vec();
        let mut bad_layer = vec![usize::MAX; plan.n];
        for &i in &bad {
            bad_layer[i] = rng.gen_range(0..plan.l);
        }
        let detected = sample(rng, plan.n, plan.m)
            .into_iter()
            .any(|i| bad_layer[i] != usize::MAX && sample(rng, plan.l, plan.s).into_iter().any(|t| t == bad_layer[i]));
        caught += detected as usize;
    }
    Ok(caught as f64 / trials as f64)
}

/// Exact probability that CP rejects when `uncovered` of `n` points have no
/// representative within `d`, `num_challenges` distinct indices are drawn,
/// and the verifier accepts with at most `tolerated` failures.
pub fn cp_rejection_probability(n: usize, uncovered: usize, num_challenges: usize, tolerated: usize) -> BigRational {
    let total = binomial(n, num_challenges);
    let accept: BigInt = (0..=tolerated.min(num_challenges))
        .map(|f| binomial(uncovered, f) * binomial(n - uncovered, num_challenges - f))
        .sum();
    BigRational::one() - BigRational::new(accept, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn plan(n: usize, l: usize, m: usize, s: usize, rho: f64) -> AuditPlan {
        AuditPlan { n, l, m, s, rho }
    }

    #[test]
    fn reference_plan_exceeds_eighty_percent() {
        assert!(detection_probability(&plan(100, 10, 25, 6, 0.1)).unwrap() > 0.80);
    }

    #[test]
    fn zero_corruption_is_undetectable() {
        assert!(detection_probability_exact(&plan(50, 4, 10, 2, 0.0)).unwrap().is_zero());
    }

    #[test]
    fn full_layer_audit_reduces_to_hypergeometric_miss() {
        let exact = detection_probability_exact(&plan(40, 5, 7, 5, 0.25)).unwrap();
        let expected = BigRational::one() - BigRational::new(binomial(30, 7), binomial(40, 7));
        assert_eq!(exact, expected);
    }

    #[test]
    fn planner_examples() {
        let p = plan_audit(100, 10, 0.1, 0.80).unwrap();
        assert!(p.m * p.s <= 150);
        assert!(detection_probability(&p).unwrap() >= 0.80);
        let p = plan_audit(100, 10, 0.1, 0.0).unwrap();
        assert_eq!((p.m, p.s), (1, 1));
        assert_eq!(plan_audit(100, 10, 0.0, 0.5), Err(AuditError::Unachievable));
    }

    #[test]
    fn invalid_plans_rejected() {
        assert!(detection_probability(&plan(10, 3, 11, 1, 0.1)).is_err());
        assert!(detection_probability(&plan(10, 3, 1, 4, 0.1)).is_err());
        assert!(detection_probability(&plan(10, 3, 1, 1, 1.5)).is_err());
    }

    #[test]
    fn simulation_tracks_formula() {
        let p = plan(60, 8, 12, 3, 0.2);
        let exact = detection_probability(&p).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let sim = simulate_detection(&p, 20_000, &mut rng).unwrap();
        assert!((sim - exact).abs() < 0.02, "{sim} vs {exact}");
    }

    #[test]
    fn cp_rejection_edges() {
        assert!(cp_rejection_probability(100, 0, 10, 0).is_zero());
        assert!(cp_rejection_probability(100, 100, 10, 0).is_one());
        let r = cp_rejection_probability(10, 1, 1, 0);
        assert_eq!(r, BigRational::new(1.into(), 10.into()));
    }
}
