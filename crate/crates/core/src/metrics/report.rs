use serde::Serialize;

use super::{Fraction, MetricsError, ReliabilityCounts};

/// Accuracy, truthfulness, rejection rate and their rejection-weighted blend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReliabilityReport {
    pub accuracy: Fraction,
    pub truthfulness: Fraction,
    pub rejection_rate: Fraction,
    pub reliability: Fraction,
}

impl ReliabilityReport {
    /// Builds a report from accuracy and rejection rate alone.
    ///
    /// Truthfulness is `acc + rej`; reliability is
    /// `rej * acc + (1 - rej) * tru`.
    pub fn from_rates(accuracy: Fraction, rejection_rate: Fraction) -> Self {
        let truthfulness = &accuracy + &rejection_rate;
        let keep = &Fraction::one() - &rejection_rate;
        let reliability = &(&rejection_rate * &accuracy) + &(&keep * &truthfulness);
        ReliabilityReport {
            accuracy,
            truthfulness,
            rejection_rate,
            reliability,
        }
    }
}

pub fn reliability_report(counts: &ReliabilityCounts) -> Result<ReliabilityReport, MetricsError> {
    let total = counts.total();
    if total == 0 {
        return Err(MetricsError::EmptyRun);
    }
    let accuracy = Fraction::new(counts.n_correct, total);
    let rejection_rate = Fraction::new(counts.n_rejected, total);
    let report = ReliabilityReport::from_rates(accuracy, rejection_rate);
    debug_assert_eq!(report.truthfulness, &Fraction::one() - &Fraction::new(counts.n_wrong, total));
    Ok(report)
}

/// Unweighted mean of each field over several reports (one per modality).
pub fn macro_report(reports: &[ReliabilityReport]) -> Option<ReliabilityReport> {
    let field = |f: fn(&ReliabilityReport) -> &Fraction| Fraction::mean(&reports.iter().map(|r| f(r).clone()).collect::<Vec<_>>());
    Some(ReliabilityReport {
        accuracy: field(|r| &r.accuracy)?,
        truthfulness: field(|r| &r.truthfulness)?,
        rejection_rate: field(|r| &r.rejection_rate)?,
        reliability: field(|r| &r.reliability)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pct(text: &str) -> Fraction {
        &Fraction::parse_decimal(text).unwrap() / &Fraction::from_integer(100)
    }

    #[test]
    fn idk_prompting_sound_row() {
        let acc = pct("58.26");
        let rej = &pct("76.28") - &acc;
        let report = ReliabilityReport::from_rates(acc, rej);
        assert_eq!(report.rejection_rate.percent(), "18.02");
        assert_eq!(report.reliability.percent(), "73.03");
    }

    #[test]
    fn lora_speech_row() {
        let acc = pct("47.90");
        let rej = &pct("61.86") - &acc;
        let report = ReliabilityReport::from_rates(acc, rej);
        assert_eq!(report.reliability.percent(), "59.91");
    }

    #[test]
    fn zero_rejection_collapses_to_accuracy() {
        let report = reliability_report(&ReliabilityCounts::new(37, 0, 63)).unwrap();
        assert_eq!(report.reliability, Fraction::new(37, 100));
        assert_eq!(report.accuracy, report.truthfulness);
    }

    #[test]
    fn empty_counts_error() {
        assert_eq!(reliability_report(&ReliabilityCounts::default()), Err(MetricsError::EmptyRun));
    }

    #[test]
    fn macro_average() {
        let a = reliability_report(&ReliabilityCounts::new(1, 1, 0)).unwrap();
        let b = reliability_report(&ReliabilityCounts::new(0, 0, 2)).unwrap();
        let m = macro_report(&[a, b]).unwrap();
        assert_eq!(m.accuracy, Fraction::new(1, 4));
        assert_eq!(m.truthfulness, Fraction::new(1, 2));
        assert_eq!(m.rejection_rate, Fraction::new(1, 4));
        // mean of 3/4 and 0
        assert_eq!(m.reliability, Fraction::new(3, 8));
        assert!(macro_report(&[]).is_none());
    }

    fn counts() -> impl Strategy<Value = ReliabilityCounts> {
        (0u64..500, 0u64..500, 0u64..500)
            .prop_filter("non-empty", |(c, r, w)| c + r + w > 0)
            .prop_map(|(c, r, w)| ReliabilityCounts::new(c, r, w))
    }

    proptest! {
        #[test]
        fn truthfulness_is_accuracy_plus_rejection(c in counts()) {
            let r = reliability_report(&c).unwrap();
            prop_assert_eq!(&r.truthfulness, &(&r.accuracy + &r.rejection_rate));
            prop_assert_eq!(&r.truthfulness, &(&Fraction::one() - &Fraction::new(c.n_wrong, c.total())));
        }

        #[test]
        fn reliability_between_accuracy_and_truthfulness(c in counts()) {
            let r = reliability_report(&c).unwrap();
            prop_assert!(std::cmp::min(&r.accuracy, &r.truthfulness) <= &r.reliability);
            prop_assert!(&r.reliability <= std::cmp::max(&r.accuracy, &r.truthfulness));
        }

        #[test]
        fn scale_invariance(c in counts(), k in 1u64..50) {
            prop_assert_eq!(reliability_report(&c).unwrap(), reliability_report(&c.scaled(k)).unwrap());
        }

        #[test]
        fn monotone_bookkeeping(c in counts()) {
            let n = Fraction::new(1, c.total());
            let before = reliability_report(&c).unwrap();
            if c.n_wrong > 0 {
                let after = reliability_report(&ReliabilityCounts::new(c.n_correct, c.n_rejected + 1, c.n_wrong - 1)).unwrap();
                prop_assert_eq!(&after.truthfulness, &(&before.truthfulness + &n));
                prop_assert_eq!(&after.accuracy, &before.accuracy);
            }
            if c.n_correct > 0 {
                let after = reliability_report(&ReliabilityCounts::new(c.n_correct - 1, c.n_rejected + 1, c.n_wrong)).unwrap();
                prop_assert_eq!(&after.accuracy, &(&before.accuracy - &n));
                prop_assert_eq!(&after.truthfulness, &before.truthfulness);
            }
        }
    }
}
