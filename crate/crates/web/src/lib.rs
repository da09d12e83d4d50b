//! wasm-bindgen front end for the browser demo.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs no glue beyond `JSON.parse`. Failures come back as `{"error": ...}`.

use epkit::adiabatic::{continue_eigensystem, lambda_sweep, LoopPath, Orientation, PhaseConvention};
use epkit::branch::classify;
use epkit::eigensystem::eigenvalues_two_level;
use epkit::model::{CMatrix, EffectiveHamiltonianModel, ParameterPoint, TwoLevelModel};
use epkit::scattering::{linspace, s_matrix, trapping_sweep, unitarity_defect};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn c(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn matrix(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| Value::Array((0..m.ncols()).map(|k| c(m[(r, k)])).collect()))
            .collect(),
    )
}

fn finish(r: Result<Value, String>) -> String {
    r.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

/// Energies and widths of both levels across `[lo, hi]` at fixed coupling,
/// plus the regime at the crossing.
pub fn level_curves_value(gamma1: f64, gamma2: f64, omega: f64, lo: f64, hi: f64, n: usize) -> Result<Value, String> {
    let m = TwoLevelModel::crossing(gamma1, gamma2, omega).map_err(|e| e.to_string())?;
    let lambdas = linspace(lo, hi, n.clamp(2, 4001));
    let cls = classify(&m, omega).map_err(|e| e.to_string())?;
    // continuation keeps the branches labelled; exactly at the double pole it
    // cannot, so fall back to the sorted closed form
    let (values, continued) = match lambda_sweep(&m, omega, &lambdas) {
        Ok(rec) => (rec.into_iter().map(|r| [r.values[0], r.values[1]]).collect::<Vec<_>>(), true),
        Err(_) => (
            lambdas
                .iter()
                .map(|&l| eigenvalues_two_level(&m, ParameterPoint::new(l, omega)))
                .collect(),
            false,
        ),
    };
    let series = |k: usize, f: fn(&epkit::eigensystem::ComplexEigenvalue) -> f64| -> Vec<f64> {
        values.iter().map(|v| f(&v[k])).collect()
    };
    Ok(json!({
        "lambdas": lambdas,
        "energy": [series(0, |v| v.energy), series(1, |v| v.energy)],
        "width": [series(0, |v| v.width), series(1, |v| v.width)],
        "regime": cls.regime,
        "f_real": cls.f_real_at_crossing,
        "omega_cr": (gamma1 - gamma2).abs() / 4.0,
        "continued": continued,
    }))
}

/// One turn around a circle in the `(lambda, omega)` plane.
#[allow(clippy::too_many_arguments)]
pub fn encircle_value(
    gamma1: f64,
    gamma2: f64,
    center_lambda: f64,
    center_omega: f64,
    radius: f64,
    steps: usize,
    negative: bool,
    exchange_rule: bool,
) -> Result<Value, String> {
    let m = TwoLevelModel::crossing(gamma1, gamma2, 0.0).map_err(|e| e.to_string())?;
    let orientation = if negative { Orientation::Negative } else { Orientation::Positive };
    let path = LoopPath::circle(ParameterPoint::new(center_lambda, center_omega), radius, steps.clamp(16, 8192))
        .with_orientation(orientation);
    let convention = if exchange_rule {
        PhaseConvention::PaperExchangeRule
    } else {
        PhaseConvention::CProductContinuity
    };
    let r = continue_eigensystem(&m, &path, convention).map_err(|e| e.to_string())?;
    let traces: Vec<Value> = (0..2)
        .map(|k| Value::Array(r.trace.iter().map(|s| c(s.values[k].value)).collect()))
        .collect();
    let path_pts: Vec<Value> = r.trace.iter().map(|s| json!([s.point.lambda, s.point.omega])).collect();
    Ok(json!({
        "path": path_pts,
        "values": traces,
        "permutation": r.branch_permutation,
        "monodromy": matrix(&r.phase_matrix),
        "period": r.period,
        "closure": r.eigenvalue_closure,
        "crossings": r.crossings.len(),
    }))
}

/// Two levels at `+-spacing/2` coupled with equal strength to one channel:
/// the widths as the coupling grows, and the phase of `S_11` across energy
/// at `alpha`.
pub fn trapping_value(spacing: f64, alpha: f64, alpha_max: f64, n: usize) -> Result<Value, String> {
    let h0 = DMatrix::from_row_slice(2, 2, &[spacing / 2.0, 0.0, 0.0, -spacing / 2.0]);
    let w = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
    let model = EffectiveHamiltonianModel::new(h0, w).map_err(|e| e.to_string())?;
    let alphas = linspace(0.0, alpha_max, n.clamp(2, 2001));
    let t = trapping_sweep(&model, &alphas).map_err(|e| e.to_string())?;
    let scaled = model.scaled_coupling(alpha);
    let energies = linspace(-3.0 * spacing.max(0.5), 3.0 * spacing.max(0.5), 801);
    let mut phase = Vec::with_capacity(energies.len());
    let mut defect: f64 = 0.0;
    for &e in &energies {
        let s = s_matrix(&scaled, e).map_err(|e| e.to_string())?;
        phase.push(s[(0, 0)].arg());
        defect = defect.max(unitarity_defect(&s));
    }
    Ok(json!({
        "alphas": alphas,
        "widths": [
            t.widths.iter().map(|w| w[0]).collect::<Vec<_>>(),
            t.widths.iter().map(|w| w[1]).collect::<Vec<_>>(),
        ],
        "energies": energies,
        "phase": phase,
        "unitarity_defect": defect,
    }))
}

#[wasm_bindgen]
pub fn level_curves(gamma1: f64, gamma2: f64, omega: f64, lo: f64, hi: f64, n: usize) -> String {
    finish(level_curves_value(gamma1, gamma2, omega, lo, hi, n))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn encircle(
    gamma1: f64,
    gamma2: f64,
    center_lambda: f64,
    center_omega: f64,
    radius: f64,
    steps: usize,
    negative: bool,
    exchange_rule: bool,
) -> String {
    finish(encircle_value(
        gamma1,
        gamma2,
        center_lambda,
        center_omega,
        radius,
        steps,
        negative,
        exchange_rule,
    ))
}

#[wasm_bindgen]
pub fn trapping(spacing: f64, alpha: f64, alpha_max: f64, n: usize) -> String {
    finish(trapping_value(spacing, alpha, alpha_max, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_report_the_regime() {
        let v = level_curves_value(1.0, 0.0, 0.3, -1.0, 1.0, 101).unwrap();
        assert_eq!(v["regime"], "overcritical");
        assert_eq!(v["energy"][0].as_array().unwrap().len(), 101);
        // exactly at the double pole the closed form takes over
        let v = level_curves_value(1.0, 0.0, 0.25, -1.0, 1.0, 101).unwrap();
        assert_eq!(v["regime"], "double_pole");
    }

    #[test]
    fn loop_around_the_branch_point_swaps() {
        let v = encircle_value(1.0, 0.0, 0.0, 0.25, 0.1, 512, false, false).unwrap();
        assert_eq!(v["permutation"], json!([1, 0]));
        assert_eq!(v["period"], 4);
    }

    #[test]
    fn loop_through_the_branch_point_is_an_error() {
        let s = encircle(1.0, 0.0, 0.1, 0.25, 0.1, 512, false, false);
        assert!(s.contains("error"), "{s}");
    }

    #[test]
    fn trapping_keeps_s_unitary() {
        let v = trapping_value(2.0, 1.0, 10.0, 51).unwrap();
        assert!(v["unitarity_defect"].as_f64().unwrap() < 1e-10);
        let w = &v["widths"][1];
        assert!(w[50].as_f64().unwrap() < w[10].as_f64().unwrap());
    }
}
