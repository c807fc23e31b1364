use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::DatasetRecord;

/// First rule a dropped record violated, checked in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    NonFinite,
    InvalidCumulant,
    BaselineDegenerate,
    /// No coherence source at all (`p_c = p_h = tau = 0`).
    Degenerate,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NonFinite => "non-finite",
            Self::InvalidCumulant => "invalid-cumulant",
            Self::BaselineDegenerate => "baseline-degenerate",
            Self::Degenerate => "degenerate",
        })
    }
}

/// Which rules to enforce. All are on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterRules {
    pub drop_non_finite: bool,
    pub drop_invalid_cumulants: bool,
    pub drop_degenerate_baselines: bool,
    pub drop_coherence_free: bool,
}

impl Default for FilterRules {
    fn default() -> Self {
        Self {
            drop_non_finite: true,
            drop_invalid_cumulants: true,
            drop_degenerate_baselines: true,
            drop_coherence_free: true,
        }
    }
}

impl FilterRules {
    pub fn reason(&self, r: &DatasetRecord) -> Option<DropReason> {
        let finite = r.features().iter().all(|x| x.is_finite())
            && r.q_h.is_finite()
            && r.w.is_finite()
            && r.ratio.is_finite();
        if self.drop_non_finite && !finite {
            return Some(DropReason::NonFinite);
        }
        if self.drop_invalid_cumulants && r.flags.any_cumulant_invalid() {
            return Some(DropReason::InvalidCumulant);
        }
        if self.drop_degenerate_baselines && r.flags.any_baseline_degenerate() {
            return Some(DropReason::BaselineDegenerate);
        }
        if self.drop_coherence_free && r.p_c == 0.0 && r.p_h == 0.0 && r.tau == 0.0 {
            return Some(DropReason::Degenerate);
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<DatasetRecord>,
    pub census: BTreeMap<DropReason, usize>,
}

impl FilterOutcome {
    pub fn dropped(&self) -> usize {
        self.census.values().sum()
    }
}

/// Keeps records passing every enabled rule, in their original order.
pub fn filter(records: &[DatasetRecord], rules: &FilterRules) -> FilterOutcome {
    let mut census = BTreeMap::new();
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        match rules.reason(r) {
            Some(reason) => *census.entry(reason).or_insert(0) += 1,
            None => kept.push(*r),
        }
    }
    FilterOutcome { kept, census }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{evaluate_tuple, RecordFlags};
    use crate::model::{BatteryParams, GeneratorVariant};

    fn clean() -> DatasetRecord {
        evaluate_tuple(&BatteryParams::reference_enhanced(), 0, GeneratorVariant::TracePreserving)
    }

    #[test]
    fn nan_cumulant_is_non_finite() {
        let mut r = clean();
        r.c[3] = f64::NAN;
        let out = filter(&[r], &FilterRules::default());
        assert!(out.kept.is_empty());
        assert_eq!(out.census[&DropReason::NonFinite], 1);
        assert_eq!(DropReason::NonFinite.to_string(), "non-finite");
    }

    #[test]
    fn coherence_free_record_is_degenerate() {
        let r = evaluate_tuple(
            &BatteryParams::reference_enhanced().without_coherence(),
            0,
            GeneratorVariant::TracePreserving,
        );
        let out = filter(&[r], &FilterRules::default());
        assert_eq!(out.census.get(&DropReason::Degenerate), Some(&1));
    }

    #[test]
    fn clean_record_survives_bit_identical() {
        let r = clean();
        let out = filter(&[r], &FilterRules::default());
        assert_eq!(out.kept.len(), 1);
        assert!(out.kept[0].same_bits(&r));
        assert_eq!(out.dropped(), 0);
    }

    #[test]
    fn flags_drive_cumulant_and_baseline_rules() {
        let mut a = clean();
        a.flags |= RecordFlags::C2_UNSTABLE;
        let mut b = clean();
        b.flags |= RecordFlags::C3_BASELINE_DEGENERATE;
        let out = filter(&[a, b], &FilterRules::default());
        assert_eq!(out.census[&DropReason::InvalidCumulant], 1);
        assert_eq!(out.census[&DropReason::BaselineDegenerate], 1);
    }
}
