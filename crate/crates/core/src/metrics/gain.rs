use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};

use super::{Fraction, MetricsError, OutcomeLabel, ReliabilityCounts};

/// Ordered per-question outcomes of one (model, pipeline, slice) run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalRun {
    pub outcomes: Vec<(String, OutcomeLabel)>,
}

impl EvalRun {
    pub fn new(outcomes: Vec<(String, OutcomeLabel)>) -> Self {
        EvalRun { outcomes }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = OutcomeLabel> + '_ {
        self.outcomes.iter().map(|(_, l)| *l)
    }

    fn index(&self) -> Result<BTreeMap<&str, OutcomeLabel>, MetricsError> {
        let mut map = BTreeMap::new();
        for (id, label) in &self.outcomes {
            if map.insert(id.as_str(), *label).is_some() {
                return Err(MetricsError::DuplicateId(id.clone()));
            }
        }
        Ok(map)
    }
}

impl<S: Into<String>> FromIterator<(S, OutcomeLabel)> for EvalRun {
    fn from_iter<T: IntoIterator<Item = (S, OutcomeLabel)>>(iter: T) -> Self {
        EvalRun::new(iter.into_iter().map(|(id, l)| (id.into(), l)).collect())
    }
}

/// Six-cell decomposition of how baseline answers moved under a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct TransitionMatrix {
    pub cc: u64,
    pub cr: u64,
    pub cw: u64,
    pub wc: u64,
    pub wr: u64,
    pub ww: u64,
}

impl TransitionMatrix {
    pub fn baseline_correct(&self) -> u64 {
        self.cc + self.cr + self.cw
    }

    pub fn baseline_wrong(&self) -> u64 {
        self.wc + self.wr + self.ww
    }

    pub fn record(&mut self, baseline: OutcomeLabel, method: OutcomeLabel) {
        use OutcomeLabel::*;
        let cell = match (baseline, method) {
            (Correct, Correct) => &mut self.cc,
            (Correct, Rejected) => &mut self.cr,
            (Correct, Wrong) => &mut self.cw,
            (Wrong, Correct) => &mut self.wc,
            (Wrong, Rejected) => &mut self.wr,
            (Wrong, Wrong) => &mut self.ww,
            (Rejected, _) => unreachable!("baseline rejections are filtered before tabulation"),
        };
        *cell += 1;
    }

    /// Tally of the method run implied by the matrix.
    pub fn method_counts(&self) -> ReliabilityCounts {
        ReliabilityCounts::new(self.cc + self.wc, self.cr + self.wr, self.cw + self.ww)
    }

    pub fn scaled(&self, k: u64) -> Self {
        TransitionMatrix {
            cc: self.cc * k,
            cr: self.cr * k,
            cw: self.cw * k,
            wc: self.wc * k,
            wr: self.wr * k,
            ww: self.ww * k,
        }
    }
}

impl std::ops::Add for TransitionMatrix {
    type Output = TransitionMatrix;

    fn add(self, o: Self) -> Self {
        TransitionMatrix {
            cc: self.cc + o.cc,
            cr: self.cr + o.cr,
            cw: self.cw + o.cw,
            wc: self.wc + o.wc,
            wr: self.wr + o.wr,
            ww: self.ww + o.ww,
        }
    }
}

pub fn transition_matrix(baseline: &EvalRun, method: &EvalRun) -> Result<TransitionMatrix, MetricsError> {
    let base = baseline.index()?;
    let meth = method.index()?;
    let base_ids: BTreeSet<&str> = base.keys().copied().collect();
    let meth_ids: BTreeSet<&str> = meth.keys().copied().collect();
    if base_ids != meth_ids {
        return Err(MetricsError::Pairing {
            only_baseline: base_ids.difference(&meth_ids).map(|s| s.to_string()).collect(),
            only_method: meth_ids.difference(&base_ids).map(|s| s.to_string()).collect(),
        });
    }
    let rejected = base.values().filter(|&&l| l == OutcomeLabel::Rejected).count() as u64;
    if rejected > 0 {
        return Err(MetricsError::BaselineContamination(rejected));
    }
    let mut matrix = TransitionMatrix::default();
    for (id, b) in &base {
        matrix.record(*b, meth[id]);
    }
    Ok(matrix)
}

/// Reliability Gain Index on the extended reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rgi {
    NegInfinite,
    Finite(f64),
    PosInfinite,
    Undefined,
}

impl Rgi {
    /// `log10(delta_hum / delta_con)` with the zero cases made explicit.
    pub fn from_deltas(delta_con: &Fraction, delta_hum: &Fraction) -> Rgi {
        match (delta_con.is_zero(), delta_hum.is_zero()) {
            (true, true) => Rgi::Undefined,
            (true, false) => Rgi::PosInfinite,
            (false, true) => Rgi::NegInfinite,
            (false, false) => Rgi::Finite((delta_hum / delta_con).to_f64().log10()),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Rgi::Finite(v) => Some(*v),
            _ => None,
        }
    }

    /// Float view: infinities map to `f64::INFINITY`, undefined to NaN.
    pub fn to_f64(&self) -> f64 {
        match self {
            Rgi::NegInfinite => f64::NEG_INFINITY,
            Rgi::Finite(v) => *v,
            Rgi::PosInfinite => f64::INFINITY,
            Rgi::Undefined => f64::NAN,
        }
    }

    pub fn is_positive(&self) -> bool {
        match self {
            Rgi::Finite(v) => *v > 0.0,
            Rgi::PosInfinite => true,
            _ => false,
        }
    }

    /// Two-decimal rendering, half-up; `+inf`, `-inf`, `undef` otherwise.
    pub fn render(&self) -> String {
        match self {
            Rgi::NegInfinite => "-inf".to_string(),
            Rgi::PosInfinite => "+inf".to_string(),
            Rgi::Undefined => "undef".to_string(),
            Rgi::Finite(v) => {
                let text = Fraction::from_f64(*v).expect("finite").to_fixed(2);
                if text == "-0.00" {
                    "0.00".to_string()
                } else {
                    text
                }
            }
        }
    }

    /// Mean of several indices. Any undefined input, or a mix of opposite
    /// infinities, gives `Undefined`; a single infinity dominates.
    pub fn mean(values: &[Rgi]) -> Rgi {
        if values.is_empty() || values.contains(&Rgi::Undefined) {
            return Rgi::Undefined;
        }
        let pos = values.contains(&Rgi::PosInfinite);
        let neg = values.contains(&Rgi::NegInfinite);
        match (pos, neg) {
            (true, true) => Rgi::Undefined,
            (true, false) => Rgi::PosInfinite,
            (false, true) => Rgi::NegInfinite,
            (false, false) => {
                let sum: f64 = values.iter().filter_map(Rgi::value).sum();
                Rgi::Finite(sum / values.len() as f64)
            }
        }
    }
}

impl fmt::Display for Rgi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Serialize for Rgi {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Rgi::Finite(v) => serializer.serialize_f64(*v),
            other => serializer.serialize_str(&other.render()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub delta_con: Fraction,
    pub delta_hum: Fraction,
    pub rgi: Rgi,
}

impl GainReport {
    pub fn from_deltas(delta_con: Fraction, delta_hum: Fraction) -> Self {
        let rgi = Rgi::from_deltas(&delta_con, &delta_hum);
        GainReport { delta_con, delta_hum, rgi }
    }
}

pub fn gain_report(matrix: &TransitionMatrix) -> Result<GainReport, MetricsError> {
    let n_correct = matrix.baseline_correct();
    let n_wrong = matrix.baseline_wrong();
    if n_correct == 0 {
        return Err(MetricsError::DegenerateBaseline("correct"));
    }
    if n_wrong == 0 {
        return Err(MetricsError::DegenerateBaseline("wrong"));
    }
    let delta_con = Fraction::new(n_correct - matrix.cc, n_correct);
    let delta_hum = Fraction::new(n_wrong - matrix.ww, n_wrong);
    Ok(GainReport::from_deltas(delta_con, delta_hum))
}

/// Macro average over modalities: deltas and RGI are each averaged
/// (the RGI is the mean of per-slice indices, not the index of the means).
pub fn macro_gain(reports: &[GainReport]) -> Option<GainReport> {
    let delta_con = Fraction::mean(&reports.iter().map(|r| r.delta_con.clone()).collect::<Vec<_>>())?;
    let delta_hum = Fraction::mean(&reports.iter().map(|r| r.delta_hum.clone()).collect::<Vec<_>>())?;
    let rgi = Rgi::mean(&reports.iter().map(|r| r.rgi).collect::<Vec<_>>());
    Some(GainReport { delta_con, delta_hum, rgi })
}
