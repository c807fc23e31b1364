//! Steady state of the untilted generator, time evolution, and the
//! charging / storage / leakage energy indicators.

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    build_generator, BatteryParams, GeneratorVariant, ModelError, StateVector,
};

/// Two smallest singular values closer than this leave the null direction
/// undetermined.
pub const NULL_SPACE_GAP: f64 = 1e-8;
/// Tolerated negativity of a normalized population.
pub const NEGATIVE_POPULATION_TOL: f64 = 1e-9;
/// Smallest energy accepted as the denominator of an indicator ratio.
pub const INDICATOR_DENOMINATOR_MIN: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("null space of the generator is degenerate (smallest singular values {0:e}, {1:e})")]
    NullSpaceDegenerate(f64, f64),
    #[error("steady state is non-physical: {0}")]
    NonPhysical(String),
    #[error("integrator step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("initial state is not normalized (population sum {0})")]
    NotNormalized(f64),
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),
    #[error("indicator ratio has a degenerate denominator ({0})")]
    DivisionDegenerate(&'static str),
}

/// Steady state from the least-singular right vector of `L(0)`, normalized
/// so the populations sum to one.
///
/// For [`GeneratorVariant::Verbatim`] the generator has no exact null
/// vector; the returned state is the least-singular direction and its
/// residual equals the smallest singular value.
pub fn steady_state(
    params: &BatteryParams,
    variant: GeneratorVariant,
) -> Result<StateVector, DynamicsError> {
    let l = build_generator(params, 0.0, variant)?.entries;
    null_state(&l)
}

pub(crate) fn null_state(l: &Matrix5<f64>) -> Result<StateVector, DynamicsError> {
    let svd = l.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let (s0, s1) = (svd.singular_values[order[0]], svd.singular_values[order[1]]);
    if s1 - s0 < NULL_SPACE_GAP {
        return Err(DynamicsError::NullSpaceDegenerate(s0, s1));
    }
    let v = v_t.row(order[0]).transpose();
    let total: f64 = v.rows(0, 4).sum();
    if total.abs() < 1e-300 || !total.is_finite() {
        return Err(DynamicsError::NonPhysical(
            "null vector carries no population".into(),
        ));
    }
    let state = StateVector::from_array((v / total).into());
    let pops = [state.rho11, state.rho22, state.rho_bb, state.rho_aa];
    if let Some(p) = pops.iter().find(|&&p| p < -NEGATIVE_POPULATION_TOL) {
        return Err(DynamicsError::NonPhysical(format!("population {p:e}")));
    }
    Ok(state)
}

/// `max_i |(L(0) rho)_i|`.
pub fn residual(params: &BatteryParams, state: &StateVector, variant: GeneratorVariant) -> Result<f64, ModelError> {
    let l = build_generator(params, 0.0, variant)?.entries;
    Ok((l * Vector5::from(state.to_array())).amax())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Dimensionless times `r t`, starting at 0.
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
}

impl Trajectory {
    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectory has at least two points")
    }
}

/// Error-control settings for [`evolve_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

/// Integrates `d rho / dt = L(0) rho` with output on `n_out` evenly spaced
/// times in `[0, t_end]`.
pub fn evolve(
    params: &BatteryParams,
    rho0: &StateVector,
    t_end: f64,
    n_out: usize,
    variant: GeneratorVariant,
) -> Result<Trajectory, DynamicsError> {
    evolve_with(params, rho0, t_end, n_out, variant, IntegratorOptions::default())
}

pub fn evolve_with(
    params: &BatteryParams,
    rho0: &StateVector,
    t_end: f64,
    n_out: usize,
    variant: GeneratorVariant,
    opts: IntegratorOptions,
) -> Result<Trajectory, DynamicsError> {
    let sum = rho0.population_sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(DynamicsError::NotNormalized(sum));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(DynamicsError::InvalidTimeGrid(format!("t_end = {t_end}")));
    }
    if n_out < 2 {
        return Err(DynamicsError::InvalidTimeGrid(format!("n_out = {n_out}, need at least 2")));
    }
    let l = build_generator(params, 0.0, variant)?.entries;
    let times: Vec<f64> = (0..n_out)
        .map(|k| t_end * k as f64 / (n_out - 1) as f64)
        .collect();
    let mut stepper = Dopri5::new(&l, opts);
    let mut y = Vector5::from(rho0.to_array());
    let mut states = Vec::with_capacity(n_out);
    states.push(*rho0);
    for w in times.windows(2) {
        y = stepper.advance(y, w[0], w[1])?;
        states.push(StateVector::from_array(y.into()));
    }
    Ok(Trajectory { times, states })
}

// Dormand-Prince 5(4) tableau; the generator is autonomous so the nodes
// c_i never appear.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive embedded Runge-Kutta stepper for a constant linear generator.
struct Dopri5<'a> {
    l: &'a Matrix5<f64>,
    opts: IntegratorOptions,
    h: f64,
    steps: usize,
}

impl<'a> Dopri5<'a> {
    fn new(l: &'a Matrix5<f64>, opts: IntegratorOptions) -> Self {
        let scale = l.amax().max(1.0);
        Self {
            l,
            opts,
            h: 0.01 / scale,
            steps: 0,
        }
    }

    fn advance(&mut self, mut y: Vector5<f64>, t0: f64, t1: f64) -> Result<Vector5<f64>, DynamicsError> {
        let l = self.l;
        let mut t = t0;
        let mut k1 = l * y;
        while t < t1 {
            let last = t + self.h >= t1;
            let h = if last { t1 - t } else { self.h };
            if h < 1e-14 * t.abs().max(1.0) && !last {
                return Err(DynamicsError::StepSizeUnderflow { t, h });
            }
            self.steps += 1;
            if self.steps > self.opts.max_steps {
                return Err(DynamicsError::StepSizeUnderflow { t, h });
            }
            let k2 = l * (y + k1 * (h * A21));
            let k3 = l * (y + (k1 * A31 + k2 * A32) * h);
            let k4 = l * (y + (k1 * A41 + k2 * A42 + k3 * A43) * h);
            let k5 = l * (y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h);
            let k6 = l * (y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h);
            let y_new = y + (k1 * B1 + k3 * B3 + k4 * B4 + k5 * B5 + k6 * B6) * h;
            let k7 = l * y_new;
            let err_vec = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;
            let mut acc = 0.0;
            for i in 0..5 {
                let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(y_new[i].abs());
                acc += (err_vec[i] / sc).powi(2);
            }
            let err = (acc / 5.0).sqrt();
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if last { t1 } else { t + h };
                y = y_new;
                k1 = k7;
                // a shortened final step says nothing about the natural step
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
            } else {
                self.h = h * factor.min(1.0);
                if self.h < 1e-14 * t.abs().max(1.0) {
                    return Err(DynamicsError::StepSizeUnderflow { t, h: self.h });
                }
            }
        }
        Ok(y)
    }
}

/// Expectation values of the charging, storage and leakage Hamiltonians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSet {
    pub e_charge: f64,
    pub e_store: f64,
    pub e_leak: f64,
    pub store_over_charge: f64,
    pub leak_over_store: f64,
    pub leak_over_charge: f64,
}

/// `(charging, storage, leakage)` energies. Charging covers levels
/// `1, 2, a`; storage `a, b`; leakage `1, 2, b`.
pub fn indicator_energies(state: &StateVector, params: &BatteryParams) -> (f64, f64, f64) {
    let ground = state.rho11 + state.rho22;
    (
        params.eps * ground + params.eps_a * state.rho_aa,
        params.eps_a * state.rho_aa + params.eps_b * state.rho_bb,
        params.eps * ground + params.eps_b * state.rho_bb,
    )
}

pub fn indicators(state: &StateVector, params: &BatteryParams) -> Result<IndicatorSet, DynamicsError> {
    let (e_charge, e_store, e_leak) = indicator_energies(state, params);
    if e_charge.abs() < INDICATOR_DENOMINATOR_MIN {
        return Err(DynamicsError::DivisionDegenerate("charging energy"));
    }
    if e_store.abs() < INDICATOR_DENOMINATOR_MIN {
        return Err(DynamicsError::DivisionDegenerate("storage energy"));
    }
    Ok(IndicatorSet {
        e_charge,
        e_store,
        e_leak,
        store_over_charge: e_store / e_charge,
        leak_over_store: e_leak / e_store,
        leak_over_charge: e_leak / e_charge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blue() -> BatteryParams {
        BatteryParams::reference_enhanced()
    }

    fn exp_oracle(params: &BatteryParams, rho0: &StateVector, t: f64) -> Vector5<f64> {
        let l = build_generator(params, 0.0, GeneratorVariant::TracePreserving)
            .unwrap()
            .entries;
        (l * t).exp() * Vector5::from(rho0.to_array())
    }

    #[test]
    fn steady_state_is_a_normalized_null_vector() {
        for p in [blue(), BatteryParams::reference_suppressed(), blue().without_coherence()] {
            let s = steady_state(&p, GeneratorVariant::TracePreserving).unwrap();
            assert!((s.population_sum() - 1.0).abs() < 1e-12);
            let res = residual(&p, &s, GeneratorVariant::TracePreserving).unwrap();
            assert!(res < 1e-10, "residual {res}");
        }
    }

    #[test]
    fn reference_storage_exceeds_charging() {
        let p = blue();
        let s = steady_state(&p, GeneratorVariant::TracePreserving).unwrap();
        let ind = indicators(&s, &p).unwrap();
        assert!(ind.store_over_charge > 1.0, "{}", ind.store_over_charge);
    }

    // Common temperature, no coherence sources. The oracle is the long-time
    // propagator exp(L t) applied to the empty battery. Frozen values come
    // from that oracle; they are not Boltzmann weights because the printed
    // generator pairs the b-level decay with the hot occupation.
    #[test]
    fn common_temperature_steady_state_matches_long_time_limit() {
        let p = BatteryParams {
            t_c: 1.0,
            t_h: 1.0,
            t_ell: 1.0,
            p_c: 0.0,
            p_h: 0.0,
            tau: 0.0,
            ..blue()
        };
        let s = steady_state(&p, GeneratorVariant::TracePreserving).unwrap();
        let long = exp_oracle(&p, &StateVector::empty_battery(), 200.0);
        for i in 0..5 {
            assert!((s.to_array()[i] - long[i]).abs() < 1e-10);
        }
        assert_eq!(s.re_rho12.abs(), 0.0);
        let frozen = [0.266_301_83, 0.266_301_83, 0.377_331_55, 0.090_064_80];
        for (a, b) in [s.rho11, s.rho22, s.rho_bb, s.rho_aa].iter().zip(frozen) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn degenerate_null_space_is_reported() {
        let l = Matrix5::<f64>::zeros();
        assert!(matches!(null_state(&l), Err(DynamicsError::NullSpaceDegenerate(..))));
    }

    #[test]
    fn evolve_matches_matrix_exponential() {
        let p = blue();
        let rho0 = StateVector::empty_battery();
        let tr = evolve(&p, &rho0, 5.0, 11, GeneratorVariant::TracePreserving).unwrap();
        assert_eq!(tr.times.len(), 11);
        assert_eq!(tr.times[0], 0.0);
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let exact = exp_oracle(&p, &rho0, *t);
            for i in 0..5 {
                assert!((s.to_array()[i] - exact[i]).abs() < 1e-7, "t={t} i={i}");
            }
        }
    }

    #[test]
    fn steady_state_is_a_fixed_point_of_evolution() {
        let p = blue();
        let ss = steady_state(&p, GeneratorVariant::TracePreserving).unwrap();
        let tr = evolve(&p, &ss, 10.0, 21, GeneratorVariant::TracePreserving).unwrap();
        for s in &tr.states {
            for i in 0..5 {
                assert!((s.to_array()[i] - ss.to_array()[i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn population_is_conserved() {
        let p = BatteryParams::reference_suppressed();
        let tr = evolve(&p, &StateVector::empty_battery(), 30.0, 61, GeneratorVariant::TracePreserving)
            .unwrap();
        for s in &tr.states {
            assert!((s.population_sum() - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn long_evolution_reaches_steady_state() {
        let p = blue();
        let ss = steady_state(&p, GeneratorVariant::TracePreserving).unwrap();
        let tr = evolve(&p, &StateVector::empty_battery(), 50.0, 3, GeneratorVariant::TracePreserving)
            .unwrap();
        for i in 0..5 {
            assert!((tr.last().to_array()[i] - ss.to_array()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn leak_over_store_falls_from_its_early_peak() {
        let p = blue();
        let tr = evolve(&p, &StateVector::empty_battery(), 50.0, 501, GeneratorVariant::TracePreserving)
            .unwrap();
        let ratios: Vec<f64> = tr.states[1..]
            .iter()
            .map(|s| indicators(s, &p).unwrap().leak_over_store)
            .collect();
        let early_peak = ratios[..10].iter().cloned().fold(f64::MIN, f64::max);
        assert!(*ratios.last().unwrap() < early_peak);
    }

    #[test]
    fn evolve_rejects_bad_input() {
        let p = blue();
        let bad = StateVector { rho11: 0.7, ..StateVector::empty_battery() };
        assert!(matches!(
            evolve(&p, &bad, 1.0, 3, GeneratorVariant::TracePreserving),
            Err(DynamicsError::NotNormalized(_))
        ));
        let ok = StateVector::empty_battery();
        assert!(evolve(&p, &ok, 0.0, 3, GeneratorVariant::TracePreserving).is_err());
        assert!(evolve(&p, &ok, 1.0, 1, GeneratorVariant::TracePreserving).is_err());
    }

    #[test]
    fn indicator_examples() {
        let p = blue();
        let excited = StateVector { rho11: 0.0, rho22: 0.0, rho_bb: 0.0, rho_aa: 1.0, re_rho12: 0.0 };
        let i = indicators(&excited, &p).unwrap();
        assert_eq!(i.e_charge, p.eps_a);
        assert_eq!(i.e_store, p.eps_a);
        assert_eq!(i.e_leak, 0.0);

        let ground = StateVector::empty_battery();
        assert_eq!(indicator_energies(&ground, &p), (p.eps, 0.0, p.eps));
        assert!(matches!(indicators(&ground, &p), Err(DynamicsError::DivisionDegenerate(_))));

        let s = StateVector { rho11: 0.2, rho22: 0.2, rho_bb: 0.35, rho_aa: 0.25, re_rho12: 0.0 };
        let i = indicators(&s, &p).unwrap();
        assert!((i.e_charge - 0.415).abs() < 1e-12);
        assert!((i.e_store - 0.515).abs() < 1e-12);
        assert!((i.e_leak - 0.18).abs() < 1e-12);
        assert!((i.leak_over_charge - i.e_leak / i.e_charge).abs() < 1e-12);
    }
}
