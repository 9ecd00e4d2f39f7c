//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function returns a JSON string. The `*_json` functions hold
//! the logic and are plain Rust, so they are tested natively; the exported
//! wrappers only translate errors into JavaScript exceptions.

use cusplab::bounds::estbasic_check;
use cusplab::geometry::{CuspDomain, CuspProfile};
use cusplab::manifold::ball_volume;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Boundary of the truncated cusp domain as a closed polygon, with its area
/// and the position of the truncated tip.
pub fn domain_outline_json(a: f64, alpha: f64, w_min: f64, cap: f64) -> Result<String, String> {
    let profile = CuspProfile::canonical(a, alpha).map_err(|e| e.to_string())?;
    let mut d = CuspDomain::new(profile, w_min).map_err(|e| e.to_string())?;
    if cap > 0.0 {
        d = d.with_cap(cap).map_err(|e| e.to_string())?;
    }
    let hw = d.half_width;
    // uniform samples plus a logarithmic cluster at the tip
    let mut xs: Vec<f64> = (0..=200).map(|i| -hw + 2.0 * hw * i as f64 / 200.0).collect();
    let lo = (0.5 * w_min).ln();
    for i in 0..=120 {
        let x = (lo + (hw.ln() - lo) * i as f64 / 120.0).exp();
        xs.push(x);
        xs.push(-x);
    }
    xs.retain(|x| x.abs() <= hw);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut outline: Vec<[f64; 2]> = xs.iter().map(|&x| [x, d.top(x)]).collect();
    outline.push([hw, -d.depth]);
    outline.push([-hw, -d.depth]);
    let tip = d.tip().map(|(x, y)| json!([x, y]));
    Ok(json!({
        "half_width": hw,
        "depth": d.depth,
        "area": d.area(),
        "tip": tip,
        "outline": outline,
    })
    .to_string())
}

/// Volume of the ball of radius ε about the cusp of the rotationally symmetric
/// manifold, by two integrators, next to the leading asymptotic term.
pub fn ball_volume_json(alpha: f64, eps: &[f64]) -> Result<String, String> {
    let rows = eps
        .iter()
        .map(|&e| {
            let b = ball_volume(alpha, e).map_err(|err| err.to_string())?;
            Ok(json!({
                "eps": e,
                "log_eta": finite(b.log_eta),
                "quadrature": finite(b.quad_value),
                "second_integrator": finite(b.second_value),
                "cross_check_error": finite(b.cross_check_error()),
                "asymptotic": finite(b.my_asymptotic),
                "ratio": finite(b.ratio_to_proof_asymptotic()),
            }))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(json!({ "alpha": alpha, "rows": rows }).to_string())
}

/// The exponent inequality −λt/2 + 2c9 λ^(1/α) ≤ c10 t^(−1/(α−1)) on a
/// log-spaced (λ, t) grid, plus the worst left-hand side at every t.
pub fn estbasic_json(alpha: f64, c9: f64) -> Result<String, String> {
    let lambdas: Vec<f64> = (0..121).map(|i| 10f64.powf(6.0 * i as f64 / 120.0)).collect();
    let ts: Vec<f64> = (0..81).map(|j| 10f64.powf(-4.0 + 4.0 * j as f64 / 80.0)).collect();
    let rep = estbasic_check(c9, alpha, &lambdas, &ts).map_err(|e| e.to_string())?;
    let curve: Vec<Value> = ts
        .iter()
        .map(|&t| {
            let worst = lambdas.iter().map(|&l| -0.5 * l * t + 2.0 * c9 * l.powf(1.0 / alpha)).fold(f64::NEG_INFINITY, f64::max);
            json!({ "t": t, "lhs_max": worst, "rhs": rep.c10 * t.powf(-1.0 / (alpha - 1.0)) })
        })
        .collect();
    Ok(json!({
        "alpha": alpha,
        "c9": c9,
        "c10": rep.c10,
        "checked": rep.checked,
        "violations": rep.violations,
        "min_margin": rep.min_margin,
        "curve": curve,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn domain_outline(a: f64, alpha: f64, w_min: f64, cap: f64) -> Result<String, JsValue> {
    domain_outline_json(a, alpha, w_min, cap).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn ball_volume_table(alpha: f64, eps: Vec<f64>) -> Result<String, JsValue> {
    ball_volume_json(alpha, &eps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn estbasic_scan(alpha: f64, c9: f64) -> Result<String, JsValue> {
    estbasic_json(alpha, c9).map_err(|e| JsValue::from_str(&e))
}
