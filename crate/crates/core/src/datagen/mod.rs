//! Seeded parameter sampling, the full observable sweep, consistency
//! filtering, group-aware splitting and the dataset file format.

mod filter;
mod io;
mod sample;
mod split;
mod sweep;

use std::path::PathBuf;

use bitflags::bitflags;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BatteryParams, GeneratorVariant};

pub use filter::{filter, DropReason, FilterOutcome, FilterRules};
pub use io::{read_dataset, read_dataset_from, write_dataset, write_dataset_to, COLUMNS};
pub use sample::{sample_parameters, ParamGrid};
pub use split::{group_split, Split};
pub use sweep::{evaluate_tuple, sweep, sweep_to_path};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset schema mismatch: missing column `{0}`")]
    MissingColumn(String),
    #[error("dataset schema mismatch: {0}")]
    Schema(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error("cannot split an empty dataset")]
    EmptyDataset,
    #[error("dataset has a single group; a group-aware split needs at least two")]
    SingleGroup,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Closed interval `[low, high]` for one sampled quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub low: f64,
    pub high: f64,
}

impl Range {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    fn check(&self, name: &str) -> Result<(), DatagenError> {
        if !(self.low.is_finite() && self.high.is_finite() && self.low <= self.high) {
            return Err(DatagenError::Config(format!(
                "range `{name}` must satisfy low <= high, got [{}, {}]",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Sampling intervals. Energies are built as `eps`, `eps_b = eps + gap_1`,
/// `eps_a = eps_b + gap_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamRanges {
    pub t_c: Range,
    pub t_h: Range,
    pub t_ell: Range,
    pub eps: Range,
    pub gap_1: Range,
    pub gap_2: Range,
    pub p_c: Range,
    pub p_h: Range,
    pub tau: Range,
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            t_c: Range::new(0.1, 7.0),
            t_h: Range::new(0.1, 7.0),
            t_ell: Range::new(0.1, 7.0),
            eps: Range::new(0.01, 2.0),
            gap_1: Range::new(0.01, 2.0),
            gap_2: Range::new(0.01, 2.0),
            p_c: Range::new(0.1, 1.0),
            p_h: Range::new(0.1, 1.0),
            tau: Range::new(0.01, 2.0),
        }
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<(), DatagenError> {
        for (name, r) in [
            ("t_c", self.t_c),
            ("t_h", self.t_h),
            ("t_ell", self.t_ell),
            ("eps", self.eps),
            ("gap_1", self.gap_1),
            ("gap_2", self.gap_2),
            ("p_c", self.p_c),
            ("p_h", self.p_h),
            ("tau", self.tau),
        ] {
            r.check(name)?;
        }
        for (name, r) in [
            ("t_c", self.t_c),
            ("t_h", self.t_h),
            ("t_ell", self.t_ell),
            ("eps", self.eps),
            ("gap_1", self.gap_1),
            ("gap_2", self.gap_2),
        ] {
            if r.low <= 0.0 {
                return Err(DatagenError::Config(format!("range `{name}` must be positive")));
            }
        }
        for (name, r) in [("p_c", self.p_c), ("p_h", self.p_h)] {
            if r.low < 0.0 || r.high > 1.0 {
                return Err(DatagenError::Config(format!("range `{name}` must lie in [0, 1]")));
            }
        }
        if self.tau.low < 0.0 {
            return Err(DatagenError::Config("range `tau` must be non-negative".into()));
        }
        Ok(())
    }

    /// One independent uniform draw of every parameter.
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R, r: f64, g: f64) -> BatteryParams {
        let u = |rng: &mut R, range: Range| {
            if range.low == range.high {
                range.low
            } else {
                rng.random_range(range.low..=range.high)
            }
        };
        let t_c = u(rng, self.t_c);
        let t_h = u(rng, self.t_h);
        let t_ell = u(rng, self.t_ell);
        let eps = u(rng, self.eps);
        let eps_b = eps + u(rng, self.gap_1);
        let eps_a = eps_b + u(rng, self.gap_2);
        let p_c = u(rng, self.p_c);
        let p_h = u(rng, self.p_h);
        let tau = u(rng, self.tau);
        BatteryParams {
            t_c,
            t_h,
            t_ell,
            eps,
            eps_b,
            eps_a,
            p_c,
            p_h,
            tau,
            r,
            g,
        }
    }
}

/// Everything needed to reproduce a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub values_per_param: usize,
    pub seed: u64,
    pub ranges: ParamRanges,
    pub variant: GeneratorVariant,
    pub r: f64,
    pub g: f64,
    pub output: Option<PathBuf>,
    /// Worker threads; 0 means all available cores.
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            values_per_param: 4,
            seed: 20_251_016,
            ranges: ParamRanges::default(),
            variant: GeneratorVariant::TracePreserving,
            r: 1.0,
            g: 1.0,
            output: None,
            workers: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.values_per_param == 0 {
            return Err(DatagenError::Config("values_per_param must be at least 1".into()));
        }
        if self.values_per_param.checked_pow(7).is_none() {
            return Err(DatagenError::Config("values_per_param^7 overflows".into()));
        }
        if !(self.r > 0.0) || !(self.g >= 0.0) {
            return Err(DatagenError::Config("r must be positive and g non-negative".into()));
        }
        self.ranges.validate()
    }

    pub fn tuple_count(&self) -> usize {
        self.values_per_param.pow(7)
    }
}

bitflags! {
    /// Per-record reasons a computed quantity is missing or untrustworthy.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct RecordFlags: u32 {
        const STEADY_STATE_FAILED = 1 << 0;
        const ERGOTROPY_FAILED = 1 << 1;
        const ERGOTROPY_BASELINE_DEGENERATE = 1 << 2;
        const THERMO_DEGENERATE = 1 << 3;
        const CUMULANTS_FAILED = 1 << 4;
        const C1_UNSTABLE = 1 << 5;
        const C2_UNSTABLE = 1 << 6;
        const C3_UNSTABLE = 1 << 7;
        const C4_UNSTABLE = 1 << 8;
        const C1_BASELINE_DEGENERATE = 1 << 9;
        const C2_BASELINE_DEGENERATE = 1 << 10;
        const C3_BASELINE_DEGENERATE = 1 << 11;
        const C4_BASELINE_DEGENERATE = 1 << 12;
    }
}

impl RecordFlags {
    const UNSTABLE: [RecordFlags; 4] = [
        Self::C1_UNSTABLE,
        Self::C2_UNSTABLE,
        Self::C3_UNSTABLE,
        Self::C4_UNSTABLE,
    ];
    const CUMULANT_BASELINE: [RecordFlags; 4] = [
        Self::C1_BASELINE_DEGENERATE,
        Self::C2_BASELINE_DEGENERATE,
        Self::C3_BASELINE_DEGENERATE,
        Self::C4_BASELINE_DEGENERATE,
    ];

    pub fn unstable(order: usize) -> Self {
        Self::UNSTABLE[order - 1]
    }

    pub fn cumulant_baseline(order: usize) -> Self {
        Self::CUMULANT_BASELINE[order - 1]
    }

    pub fn any_cumulant_invalid(&self) -> bool {
        self.intersects(
            Self::CUMULANTS_FAILED
                | Self::C1_UNSTABLE
                | Self::C2_UNSTABLE
                | Self::C3_UNSTABLE
                | Self::C4_UNSTABLE,
        )
    }

    pub fn any_baseline_degenerate(&self) -> bool {
        self.intersects(
            Self::ERGOTROPY_BASELINE_DEGENERATE
                | Self::C1_BASELINE_DEGENERATE
                | Self::C2_BASELINE_DEGENERATE
                | Self::C3_BASELINE_DEGENERATE
                | Self::C4_BASELINE_DEGENERATE,
        )
    }

    /// `|`-separated flag names; empty when clean.
    pub fn to_field(&self) -> String {
        self.iter_names()
            .map(|(name, _)| name.to_ascii_lowercase())
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn from_field(field: &str) -> Result<Self, String> {
        let mut out = RecordFlags::empty();
        for part in field.split('|').map(str::trim).filter(|s| !s.is_empty()) {
            let flag = RecordFlags::from_name(&part.to_ascii_uppercase())
                .ok_or_else(|| format!("unknown flag `{part}`"))?;
            out |= flag;
        }
        Ok(out)
    }
}

/// One row of the dataset.
///
/// Quantities that could not be computed are NaN and the reason is recorded
/// in `flags`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRecord {
    pub t_c: f64,
    pub t_h: f64,
    pub t_ell: f64,
    pub tau: f64,
    pub p_c: f64,
    pub p_h: f64,
    pub eps: f64,
    pub eps_b: f64,
    pub eps_a: f64,
    pub f: f64,
    pub q_c: f64,
    pub eta: f64,
    pub c: [f64; 4],
    pub q_h: f64,
    pub w: f64,
    /// Ergotropy over its coherence-free baseline.
    pub ratio: f64,
    /// Index of the `(p_h, T_c, T_h, T_ell, tau, p_c)` combination in the
    /// sampling grid.
    pub group_id: u64,
    pub flags: RecordFlags,
}

/// Bit patterns of `(p_h, T_c, T_h, T_ell, tau, p_c)`; energies excluded.
pub type GroupKey = [u64; 6];

impl DatasetRecord {
    /// The sixteen learning features in their canonical order.
    pub fn features(&self) -> [f64; 16] {
        [
            self.t_c, self.t_h, self.t_ell, self.tau, self.p_c, self.p_h, self.eps, self.eps_b,
            self.eps_a, self.f, self.q_c, self.eta, self.c[0], self.c[1], self.c[2], self.c[3],
        ]
    }

    pub fn group_key(&self) -> GroupKey {
        [
            self.p_h.to_bits(),
            self.t_c.to_bits(),
            self.t_h.to_bits(),
            self.t_ell.to_bits(),
            self.tau.to_bits(),
            self.p_c.to_bits(),
        ]
    }

    pub fn params(&self, r: f64, g: f64) -> BatteryParams {
        BatteryParams {
            t_c: self.t_c,
            t_h: self.t_h,
            t_ell: self.t_ell,
            eps: self.eps,
            eps_b: self.eps_b,
            eps_a: self.eps_a,
            p_c: self.p_c,
            p_h: self.p_h,
            tau: self.tau,
            r,
            g,
        }
    }

    /// Bitwise equality, treating NaN fields as equal to NaN.
    pub fn same_bits(&self, other: &Self) -> bool {
        let a = self.all_numbers();
        let b = other.all_numbers();
        a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits())
            && self.group_id == other.group_id
            && self.flags == other.flags
    }

    fn all_numbers(&self) -> [f64; 19] {
        let f = self.features();
        let mut out = [0.0; 19];
        out[..16].copy_from_slice(&f);
        out[16] = self.q_h;
        out[17] = self.w;
        out[18] = self.ratio;
        out
    }
}
