//! Ergotropy through the passive-state construction, the coherence-free
//! baseline, and the steady-state thermodynamic relations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{steady_state, DynamicsError};
use crate::model::{occupations, BatteryParams, GeneratorVariant, ModelError, StateVector};

/// Passive eigenvalues in `(-NEGATIVE_EIGEN_TOL, 0)` are clamped to zero.
pub const NEGATIVE_EIGEN_TOL: f64 = 1e-9;
pub const BASELINE_MIN: f64 = 1e-12;
pub const AFFINITY_MIN_OCCUPATION: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergeticsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("state is non-physical: density eigenvalue {0:e}")]
    NonPhysical(f64),
    #[error("baseline ergotropy {0:e} is too small to form a ratio")]
    BaselineDegenerate(f64),
    #[error("thermodynamic affinity undefined: occupation {name} = {value:e}")]
    AffinityDegenerate { name: &'static str, value: f64 },
}

/// Density-matrix eigenvalues `{rho11 + rho12, rho11 - rho12, rho_bb,
/// rho_aa}` sorted in descending order.
///
/// The ground block is taken as symmetric with equal diagonal, which is
/// what the model's dynamics produce.
pub fn passive_spectrum(state: &StateVector) -> Result<[f64; 4], EnergeticsError> {
    let mut ev = [
        state.rho11 + state.re_rho12,
        state.rho11 - state.re_rho12,
        state.rho_bb,
        state.rho_aa,
    ];
    if let Some(&bad) = ev.iter().find(|&&x| x < -NEGATIVE_EIGEN_TOL) {
        return Err(EnergeticsError::NonPhysical(bad));
    }
    if ev.iter().any(|&x| x < 0.0) {
        for x in ev.iter_mut() {
            *x = x.max(0.0);
        }
        let total: f64 = ev.iter().sum();
        for x in ev.iter_mut() {
            *x /= total;
        }
    }
    // stable sort: equal eigenvalues keep their order, which cannot change
    // the paired energy because the tied levels are degenerate or tied
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// `Tr(H rho)` minus the energy of the passive state, for level energies in
/// basis order `(1, 2, b, a)`.
pub fn ergotropy(state: &StateVector, energies: &[f64; 4]) -> Result<f64, EnergeticsError> {
    let spectrum = passive_spectrum(state)?;
    let mean = energies[0] * state.rho11
        + energies[1] * state.rho22
        + energies[2] * state.rho_bb
        + energies[3] * state.rho_aa;
    let mut ascending = *energies;
    ascending.sort_by(f64::total_cmp);
    let passive: f64 = spectrum.iter().zip(&ascending).map(|(p, e)| p * e).sum();
    Ok((mean - passive).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thermo {
    /// Useful work `Q_h - T_c ln F`.
    pub w: f64,
    /// Affinity `ñ_c n_h ñ_ell / (n_c ñ_h n_ell)`.
    pub f: f64,
    pub q_h: f64,
    pub q_c: f64,
    /// Efficiency `W / Q_h`.
    pub eta: f64,
}

pub fn thermo(params: &BatteryParams) -> Result<Thermo, EnergeticsError> {
    let occ = occupations(params)?;
    for (name, value) in [("n_h", occ.n_h), ("n_c", occ.n_c), ("n_ell", occ.n_ell)] {
        if !(value >= AFFINITY_MIN_OCCUPATION) {
            return Err(EnergeticsError::AffinityDegenerate { name, value });
        }
    }
    let q_h = params.eps_a - params.eps;
    let q_c = params.eps_b - params.eps;
    let f = (occ.tilde_n_c * occ.n_h * occ.tilde_n_ell) / (occ.n_c * occ.tilde_n_h * occ.n_ell);
    let w = q_h - params.t_c * f.ln();
    Ok(Thermo {
        w,
        f,
        q_h,
        q_c,
        eta: w / q_h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergeticsRecord {
    pub ergotropy: f64,
    /// Ergotropy of the steady state reached with `p_c = p_h = tau = 0`.
    pub baseline: f64,
    /// `ergotropy / baseline`, absent when the baseline is degenerate.
    pub ratio: Option<f64>,
    pub thermo: Thermo,
}

/// Steady-state ergotropy, its coherence-free baseline and the
/// thermodynamic quantities. A degenerate baseline leaves `ratio` empty.
pub fn energetics(
    params: &BatteryParams,
    variant: GeneratorVariant,
) -> Result<EnergeticsRecord, EnergeticsError> {
    let energies = params.level_energies();
    let ss = steady_state(params, variant)?;
    let ergo = ergotropy(&ss, &energies)?;
    let baseline = if params.is_coherence_free() {
        ergo
    } else {
        let ss0 = steady_state(&params.without_coherence(), variant)?;
        ergotropy(&ss0, &energies)?
    };
    let ratio = (baseline.abs() > BASELINE_MIN).then(|| ergo / baseline);
    Ok(EnergeticsRecord {
        ergotropy: ergo,
        baseline,
        ratio,
        thermo: thermo(params)?,
    })
}

/// Like [`energetics`] but a degenerate baseline is an error.
pub fn ergotropy_ratio(
    params: &BatteryParams,
    variant: GeneratorVariant,
) -> Result<EnergeticsRecord, EnergeticsError> {
    let rec = energetics(params, variant)?;
    match rec.ratio {
        Some(_) => Ok(rec),
        None => Err(EnergeticsError::BaselineDegenerate(rec.baseline)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TP: GeneratorVariant = GeneratorVariant::TracePreserving;

    fn hand_state() -> StateVector {
        StateVector {
            rho11: 0.2,
            rho22: 0.2,
            rho_bb: 0.35,
            rho_aa: 0.25,
            re_rho12: 0.15,
        }
    }

    #[test]
    fn passive_spectrum_examples() {
        let s = StateVector {
            rho11: 0.4,
            rho22: 0.4,
            rho_bb: 0.15,
            rho_aa: 0.05,
            re_rho12: 0.0,
        };
        assert_eq!(passive_spectrum(&s).unwrap(), [0.4, 0.4, 0.15, 0.05]);

        let p = passive_spectrum(&hand_state()).unwrap();
        let want = [0.35, 0.35, 0.25, 0.05];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }

        let maximal = StateVector {
            re_rho12: 0.2,
            ..hand_state()
        };
        assert_eq!(passive_spectrum(&maximal).unwrap()[3], 0.0);
    }

    #[test]
    fn passive_spectrum_rejects_negative_eigenvalues() {
        let s = StateVector {
            re_rho12: 0.3,
            ..hand_state()
        };
        assert!(matches!(passive_spectrum(&s), Err(EnergeticsError::NonPhysical(_))));
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clamped() {
        let s = StateVector {
            re_rho12: 0.2 + 1e-12,
            ..hand_state()
        };
        let p = passive_spectrum(&s).unwrap();
        assert_eq!(p[3], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_ergotropy() {
        let e = ergotropy(&hand_state(), &[0.1, 0.1, 0.4, 1.5]).unwrap();
        assert!((e - 0.310).abs() < 1e-12, "{e}");
    }

    #[test]
    fn passive_and_inverted_states() {
        let passive = StateVector {
            rho11: 0.4,
            rho22: 0.3,
            rho_bb: 0.2,
            rho_aa: 0.1,
            re_rho12: 0.0,
        };
        assert_eq!(ergotropy(&passive, &[0.1, 0.1, 0.4, 1.5]).unwrap(), 0.0);

        let inverted = StateVector {
            rho11: 0.0,
            rho22: 0.0,
            rho_bb: 0.0,
            rho_aa: 1.0,
            re_rho12: 0.0,
        };
        assert_eq!(ergotropy(&inverted, &[0.0, 0.0, 0.4, 1.5]).unwrap(), 1.5);
    }

    #[test]
    fn ratio_is_one_without_coherence() {
        let p = BatteryParams::reference_enhanced().without_coherence();
        let rec = ergotropy_ratio(&p, TP).unwrap();
        assert_eq!(rec.ratio, Some(1.0));
    }

    #[test]
    fn reference_ratios_straddle_one() {
        let blue = ergotropy_ratio(&BatteryParams::reference_enhanced(), TP).unwrap();
        assert!(blue.ratio.unwrap() > 1.0, "{:?}", blue);
        let grey = ergotropy_ratio(&BatteryParams::reference_suppressed(), TP).unwrap();
        assert!(grey.ratio.unwrap() < 1.0, "{:?}", grey);
    }

    #[test]
    fn thermo_reference_values() {
        let p = BatteryParams::reference_enhanced();
        let t = thermo(&p).unwrap();
        assert_eq!(t.q_h, 1.5 - 0.1);
        assert_eq!(t.q_c, 0.4 - 0.1);
        // occupations computed independently of the model module
        let n = |gap: f64, temp: f64| 1.0 / ((gap / temp).exp() - 1.0);
        let (nh, nc, nl) = (n(1.4, 6.36), n(0.3, 5.0), n(1.1, 1.0));
        let f = (1.0 + nc) * nh * (1.0 + nl) / (nc * (1.0 + nh) * nl);
        assert!((t.f - f).abs() < 1e-12 * f);
        assert!((t.w - (1.4 - 5.0 * f.ln())).abs() < 1e-12);
        assert!((t.eta - t.w / t.q_h).abs() < 1e-15);
    }

    #[test]
    fn unit_affinity_gives_unit_efficiency() {
        // common temperature and resonant gaps make F = 1 analytically
        let p = BatteryParams {
            t_c: 1.3,
            t_h: 1.3,
            t_ell: 1.3,
            ..BatteryParams::reference_enhanced()
        };
        let t = thermo(&p).unwrap();
        assert!((t.f - 1.0).abs() < 1e-14);
        assert!((t.w - t.q_h).abs() < 1e-13);
        assert!((t.eta - 1.0).abs() < 1e-13);
    }

    #[test]
    fn frozen_occupation_makes_affinity_degenerate() {
        let p = BatteryParams {
            t_ell: 1e-3,
            ..BatteryParams::reference_enhanced()
        };
        assert!(matches!(
            thermo(&p),
            Err(EnergeticsError::AffinityDegenerate { name: "n_ell", .. })
        ));
    }
}
