use std::path::Path;

use rayon::prelude::*;

use super::{sample_parameters, write_dataset, DatagenError, DatasetRecord, RecordFlags, SweepConfig};
use crate::dynamics::steady_state;
use crate::energetics::{ergotropy, thermo, BASELINE_MIN};
use crate::fcs::{cumulants, OrderStatus};
use crate::model::{BatteryParams, GeneratorVariant};

/// Computes every dataset column for one parameter tuple. Failures become
/// flags and NaN fields, never errors.
pub fn evaluate_tuple(params: &BatteryParams, group_id: u64, variant: GeneratorVariant) -> DatasetRecord {
    let mut flags = RecordFlags::empty();
    let mut rec = DatasetRecord {
        t_c: params.t_c,
        t_h: params.t_h,
        t_ell: params.t_ell,
        tau: params.tau,
        p_c: params.p_c,
        p_h: params.p_h,
        eps: params.eps,
        eps_b: params.eps_b,
        eps_a: params.eps_a,
        f: f64::NAN,
        q_c: params.eps_b - params.eps,
        eta: f64::NAN,
        c: [f64::NAN; 4],
        q_h: params.eps_a - params.eps,
        w: f64::NAN,
        ratio: f64::NAN,
        group_id,
        flags,
    };

    match thermo(params) {
        Ok(t) => {
            rec.f = t.f;
            rec.w = t.w;
            rec.eta = t.eta;
        }
        Err(_) => flags |= RecordFlags::THERMO_DEGENERATE,
    }

    let energies = params.level_energies();
    let states = steady_state(params, variant).and_then(|ss| {
        let ss0 = if params.is_coherence_free() {
            ss
        } else {
            steady_state(&params.without_coherence(), variant)?
        };
        Ok((ss, ss0))
    });
    match states {
        Ok((ss, ss0)) => match (ergotropy(&ss, &energies), ergotropy(&ss0, &energies)) {
            (Ok(e), Ok(e0)) => {
                if e0.abs() > BASELINE_MIN {
                    rec.ratio = e / e0;
                } else {
                    flags |= RecordFlags::ERGOTROPY_BASELINE_DEGENERATE;
                }
            }
            _ => flags |= RecordFlags::ERGOTROPY_FAILED,
        },
        Err(_) => flags |= RecordFlags::STEADY_STATE_FAILED,
    }

    match cumulants(params, variant) {
        Ok(set) => {
            for order in 1..=4 {
                match set.status[order - 1] {
                    OrderStatus::Valid => rec.c[order - 1] = set.c[order - 1],
                    OrderStatus::DerivativeUnstable => flags |= RecordFlags::unstable(order),
                    OrderStatus::BaselineDegenerate => flags |= RecordFlags::cumulant_baseline(order),
                }
            }
        }
        Err(_) => flags |= RecordFlags::CUMULANTS_FAILED,
    }

    rec.flags = flags;
    rec
}

/// Evaluates every grid tuple. Output order is the grid order for any
/// worker count.
pub fn sweep(config: &SweepConfig) -> Result<Vec<DatasetRecord>, DatagenError> {
    config.validate()?;
    let grid = sample_parameters(config);
    let variant = config.variant;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| DatagenError::ThreadPool(e.to_string()))?;
    let records = pool.install(|| {
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let (params, gid) = grid.get(i);
                evaluate_tuple(&params, gid, variant)
            })
            .collect()
    });
    Ok(records)
}

/// Runs [`sweep`] and writes the result to `path`.
pub fn sweep_to_path(config: &SweepConfig, path: &Path) -> Result<Vec<DatasetRecord>, DatagenError> {
    let records = sweep(config)?;
    write_dataset(&records, path)?;
    Ok(records)
}
