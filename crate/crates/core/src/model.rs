//! Battery parameters, bosonic occupations and the counting-field-tilted
//! generator acting on `(rho11, rho22, rho_bb, rho_aa, Re rho12)`.
//!
//! Units: `hbar = k_B = 1`, all energies and temperatures dimensionless.

use std::fmt;

use nalgebra::Matrix5;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exponent above which `1 / (e^x - 1)` is reported as exactly zero.
pub const OCCUPATION_EXP_CLAMP: f64 = 700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("transition gap must be positive, got {0}")]
    NonPositiveGap(f64),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("invalid battery parameters: {}", join_violations(.0))]
    InvalidParams(Vec<ParamViolation>),
}

fn join_violations(v: &[ParamViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// One violated constraint on [`BatteryParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamViolation {
    EpsPositive,
    EpsBelowEpsB,
    EpsBBelowEpsA,
    TcPositive,
    ThPositive,
    TellPositive,
    PcRange,
    PhRange,
    TauNonNegative,
    RatePositive,
    CouplingNonNegative,
}

impl fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::EpsPositive => "0 < eps",
            Self::EpsBelowEpsB => "eps < eps_b",
            Self::EpsBBelowEpsA => "eps_b < eps_a",
            Self::TcPositive => "T_c > 0",
            Self::ThPositive => "T_h > 0",
            Self::TellPositive => "T_ell > 0",
            Self::PcRange => "p_c ∈ [0,1]",
            Self::PhRange => "p_h ∈ [0,1]",
            Self::TauNonNegative => "tau ≥ 0",
            Self::RatePositive => "r > 0",
            Self::CouplingNonNegative => "g ≥ 0",
        };
        f.write_str(s)
    }
}

/// One battery configuration: the nine swept parameters plus the fixed
/// system-bath rate `r` and cavity coupling `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub t_c: f64,
    pub t_h: f64,
    pub t_ell: f64,
    /// Energy of the two degenerate ground states.
    pub eps: f64,
    pub eps_b: f64,
    pub eps_a: f64,
    pub p_c: f64,
    pub p_h: f64,
    /// Pure dephasing of the ground-state coherence.
    pub tau: f64,
    #[serde(default = "unit")]
    pub r: f64,
    #[serde(default = "unit")]
    pub g: f64,
}

fn unit() -> f64 {
    1.0
}

impl BatteryParams {
    /// Parameters of the coherence-enhanced reference configuration
    /// (storage above charging, ergotropy ratio above one).
    pub fn reference_enhanced() -> Self {
        Self {
            t_c: 5.0,
            t_h: 6.36,
            t_ell: 1.0,
            eps: 0.1,
            eps_b: 0.4,
            eps_a: 1.5,
            p_c: 0.97,
            p_h: 0.61,
            tau: 0.95,
            r: 1.0,
            g: 1.0,
        }
    }

    /// Same as [`Self::reference_enhanced`] but with `p_h = 0.9`,
    /// `p_c = 0.1`, `T_c = 0.1`, `T_h = 2`: coherence suppresses ergotropy.
    pub fn reference_suppressed() -> Self {
        Self {
            p_h: 0.9,
            p_c: 0.1,
            t_c: 0.1,
            t_h: 2.0,
            ..Self::reference_enhanced()
        }
    }

    /// Copy with all coherence sources removed (`p_c = p_h = tau = 0`).
    pub fn without_coherence(&self) -> Self {
        Self {
            p_c: 0.0,
            p_h: 0.0,
            tau: 0.0,
            ..*self
        }
    }

    pub fn is_coherence_free(&self) -> bool {
        self.p_c == 0.0 && self.p_h == 0.0 && self.tau == 0.0
    }

    /// Every violated constraint, in a fixed order. Empty when valid.
    pub fn violations(&self) -> Vec<ParamViolation> {
        use ParamViolation::*;
        let positive = |x: f64| x > 0.0 && x.is_finite();
        let unit_interval = |x: f64| (0.0..=1.0).contains(&x);
        let checks = [
            (positive(self.eps), EpsPositive),
            (self.eps < self.eps_b, EpsBelowEpsB),
            (self.eps_b < self.eps_a && self.eps_a.is_finite(), EpsBBelowEpsA),
            (positive(self.t_c), TcPositive),
            (positive(self.t_h), ThPositive),
            (positive(self.t_ell), TellPositive),
            (unit_interval(self.p_c), PcRange),
            (unit_interval(self.p_h), PhRange),
            (self.tau >= 0.0 && self.tau.is_finite(), TauNonNegative),
            (positive(self.r), RatePositive),
            (self.g >= 0.0 && self.g.is_finite(), CouplingNonNegative),
        ];
        checks
            .into_iter()
            .filter(|(ok, _)| !ok)
            .map(|(_, v)| v)
            .collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidParams(v))
        }
    }

    /// Level energies in the basis order `(1, 2, b, a)`.
    pub fn level_energies(&self) -> [f64; 4] {
        [self.eps, self.eps, self.eps_b, self.eps_a]
    }
}

/// Mean Bose-Einstein occupation `1 / (exp(gap / T) - 1)`.
///
/// Arguments above [`OCCUPATION_EXP_CLAMP`] return exactly `0.0`.
pub fn bose_occupation(gap: f64, temperature: f64) -> Result<f64, ModelError> {
    if !(gap > 0.0) {
        return Err(ModelError::NonPositiveGap(gap));
    }
    if !(temperature > 0.0) {
        return Err(ModelError::NonPositiveTemperature(temperature));
    }
    let x = gap / temperature;
    if x > OCCUPATION_EXP_CLAMP {
        return Ok(0.0);
    }
    Ok(1.0 / x.exp_m1())
}

/// Reservoir occupations and the derived rates entering the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occupations {
    pub n_h: f64,
    pub n_c: f64,
    pub n_ell: f64,
    pub tilde_n_h: f64,
    pub tilde_n_c: f64,
    pub tilde_n_ell: f64,
    /// Coherence decay rate `r (n_h + n_c)`.
    pub gbar: f64,
    /// Population-coherence coupling `r (p_c n_c + p_h n_h) / 2`.
    pub gamma12: f64,
}

/// Hot bath drives `1,2 <-> a` (gap `eps_a - eps`), cold bath drives
/// `1,2 <-> b` (gap `eps_b - eps`), the cavity is resonant with `a <-> b`.
pub fn occupations(params: &BatteryParams) -> Result<Occupations, ModelError> {
    params.validate()?;
    let n_h = bose_occupation(params.eps_a - params.eps, params.t_h)?;
    let n_c = bose_occupation(params.eps_b - params.eps, params.t_c)?;
    let n_ell = bose_occupation(params.eps_a - params.eps_b, params.t_ell)?;
    Ok(Occupations {
        n_h,
        n_c,
        n_ell,
        tilde_n_h: 1.0 + n_h,
        tilde_n_c: 1.0 + n_c,
        tilde_n_ell: 1.0 + n_ell,
        gbar: params.r * (n_h + n_c),
        gamma12: params.r * (params.p_c * n_c + params.p_h * n_h) / 2.0,
    })
}

/// Which coefficient convention to use for the coherence-to-population
/// couplings in the third and fourth rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorVariant {
    /// Literal transcription: `Γ12c n_c` in row 3, `2 Γ12h n_h` in row 4.
    Verbatim,
    /// Both entries carry the factor 2, making `(1,1,1,1,0)` a left null
    /// vector of the untilted generator.
    #[default]
    TracePreserving,
}

impl fmt::Display for GeneratorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Verbatim => "verbatim",
            Self::TracePreserving => "trace-preserving",
        })
    }
}

impl std::str::FromStr for GeneratorVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "verbatim" => Ok(Self::Verbatim),
            "trace-preserving" | "trace_preserving" => Ok(Self::TracePreserving),
            other => Err(format!(
                "unknown variant `{other}` (expected verbatim or trace-preserving)"
            )),
        }
    }
}

/// Index of each component in the Liouville-space state vector.
pub mod idx {
    pub const RHO11: usize = 0;
    pub const RHO22: usize = 1;
    pub const RHO_BB: usize = 2;
    pub const RHO_AA: usize = 3;
    pub const COH: usize = 4;
}

/// The λ-independent pieces of the tilted generator.
///
/// `L(λ) = base + (e^{-λ} - 1) down * E_{bb,aa} + (e^{λ} - 1) up * E_{aa,bb}`
/// where `base = L(0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorParts {
    pub base: Matrix5<f64>,
    /// `g^2 n_ell`, the `a -> b` cavity rate sitting at `(bb, aa)`.
    pub down: f64,
    /// `g^2 (1 + n_ell)`, the `b -> a` cavity rate sitting at `(aa, bb)`.
    pub up: f64,
    pub variant: GeneratorVariant,
}

impl GeneratorParts {
    pub fn new(params: &BatteryParams, variant: GeneratorVariant) -> Result<Self, ModelError> {
        let occ = occupations(params)?;
        let r = params.r;
        let g2 = params.g * params.g;
        let gamma_12c = r * params.p_c;
        let gamma_12h = r * params.p_h;
        let two = 2.0;
        let leak_coh = match variant {
            GeneratorVariant::Verbatim => gamma_12c * occ.n_c,
            GeneratorVariant::TracePreserving => two * gamma_12c * occ.n_c,
        };
        let down = g2 * occ.n_ell;
        let up = g2 * occ.tilde_n_ell;
        let pump = r * occ.n_h + r * occ.n_c;
        let g12 = occ.gamma12;
        #[rustfmt::skip]
        let base = Matrix5::new(
            -pump,         0.0,           r * occ.tilde_n_h,                 r * occ.tilde_n_c,                 -two * g12,
            0.0,           -pump,         r * occ.tilde_n_h,                 r * occ.tilde_n_c,                 -two * g12,
            r * occ.n_c,   r * occ.n_c,   -two * r * occ.tilde_n_h - up,     down,                              leak_coh,
            r * occ.n_h,   r * occ.n_h,   up,                                -down - two * r * occ.tilde_n_c,   two * gamma_12h * occ.n_h,
            -g12,          -g12,          gamma_12h * occ.tilde_n_h,         two * gamma_12c * occ.tilde_n_c,   -occ.gbar - params.tau,
        );
        Ok(Self {
            base,
            down,
            up,
            variant,
        })
    }

    pub fn at(&self, lambda: f64) -> Matrix5<f64> {
        let mut m = self.base;
        m[(idx::RHO_BB, idx::RHO_AA)] = self.down * (-lambda).exp();
        m[(idx::RHO_AA, idx::RHO_BB)] = self.up * lambda.exp();
        m
    }
}

/// The 5x5 tilted generator at a given counting field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorMatrix {
    pub entries: Matrix5<f64>,
    pub lambda: f64,
    pub variant: GeneratorVariant,
}

pub fn build_generator(
    params: &BatteryParams,
    lambda: f64,
    variant: GeneratorVariant,
) -> Result<GeneratorMatrix, ModelError> {
    let parts = GeneratorParts::new(params, variant)?;
    Ok(GeneratorMatrix {
        entries: parts.at(lambda),
        lambda,
        variant,
    })
}

/// Populations plus the real ground-state coherence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub rho11: f64,
    pub rho22: f64,
    pub rho_bb: f64,
    pub rho_aa: f64,
    pub re_rho12: f64,
}

impl StateVector {
    /// Uncharged battery: ground manifold equally occupied.
    pub fn empty_battery() -> Self {
        Self {
            rho11: 0.5,
            rho22: 0.5,
            rho_bb: 0.0,
            rho_aa: 0.0,
            re_rho12: 0.0,
        }
    }

    pub fn population_sum(&self) -> f64 {
        self.rho11 + self.rho22 + self.rho_bb + self.rho_aa
    }

    /// Positive semidefiniteness of the block-diagonal density matrix.
    pub fn is_physical(&self, tol: f64) -> bool {
        let pops = [self.rho11, self.rho22, self.rho_bb, self.rho_aa];
        pops.iter().all(|&p| p >= -tol && p <= 1.0 + tol)
            && self.re_rho12.abs() <= (self.rho11.max(0.0) * self.rho22.max(0.0)).sqrt() + tol
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.rho11, self.rho22, self.rho_bb, self.rho_aa, self.re_rho12]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            rho11: a[0],
            rho22: a[1],
            rho_bb: a[2],
            rho_aa: a[3],
            re_rho12: a[4],
        }
    }
}
