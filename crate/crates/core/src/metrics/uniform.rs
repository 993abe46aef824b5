use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{reliability_report, Fraction, MetricsError, ReliabilityCounts, ReliabilityReport};

/// Closed-form effect of rejecting a fraction `rho` of both correct and
/// wrong answers of a baseline with accuracy `alpha`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UniformRejectionOutcome {
    pub alpha: Fraction,
    pub rho: Fraction,
    pub acc_new: Fraction,
    pub rej_new: Fraction,
    pub tru_new: Fraction,
    pub rel_new: Fraction,
    pub rel_org: Fraction,
    /// Indiscriminate rejection still raised reliability.
    pub deceptive: bool,
}

fn check_unit(name: &'static str, value: &Fraction) -> Result<(), MetricsError> {
    if value.is_negative() || value > &Fraction::one() {
        return Err(MetricsError::OutOfRange {
            name,
            value: value.to_string(),
        });
    }
    Ok(())
}

pub fn uniform_rejection_closed_form(alpha: &Fraction, rho: &Fraction) -> Result<UniformRejectionOutcome, MetricsError> {
    check_unit("alpha", alpha)?;
    check_unit("rho", rho)?;
    let rho_alpha = rho * alpha;
    let acc_new = alpha - &rho_alpha;
    let rej_new = rho.clone();
    let tru_new = &(alpha + rho) - &rho_alpha;
    let rel_new = &(&acc_new + rho) - &(rho * rho);
    let deceptive = rho.is_positive() && rho < &(&Fraction::one() - alpha);
    Ok(UniformRejectionOutcome {
        alpha: alpha.clone(),
        rho: rho.clone(),
        acc_new,
        rej_new,
        tru_new,
        rel_new,
        rel_org: alpha.clone(),
        deceptive,
    })
}

/// Monte-Carlo counterpart of [`uniform_rejection_closed_form`]: every
/// answer of a rejection-free baseline is independently turned into a
/// rejection with probability `rho`.
pub fn simulate_uniform_rejection(counts: &ReliabilityCounts, rho: &Fraction, seed: u64) -> Result<ReliabilityReport, MetricsError> {
    check_unit("rho", rho)?;
    if counts.n_rejected > 0 {
        return Err(MetricsError::BaselineContamination(counts.n_rejected));
    }
    if counts.total() == 0 {
        return Err(MetricsError::EmptyRun);
    }
    let p = rho.to_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejected = |n: u64| (0..n).filter(|_| rng.random_bool(p)).count() as u64;
    let correct_rejected = rejected(counts.n_correct);
    let wrong_rejected = rejected(counts.n_wrong);
    reliability_report(&ReliabilityCounts::new(
        counts.n_correct - correct_rejected,
        correct_rejected + wrong_rejected,
        counts.n_wrong - wrong_rejected,
    ))
}
