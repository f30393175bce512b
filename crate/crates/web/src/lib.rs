//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function takes plain numbers or text and returns a JSON
//! string, so the page needs no generated TypeScript types. The work is done
//! by ordinary Rust functions (tested natively); the `#[wasm_bindgen]`
//! wrappers only convert errors into JS exceptions.

use interrater::matching::DetectionCounts;
use interrater::metrics::{concordance_index, surface_agreement, volumetric_dice, ToleranceConfig};
use interrater::stats::{median, wilcoxon_signed_rank, z_test_two_proportions, Alternative, ZVariant};
use interrater::study::format_mmss;
use interrater::synth::rasterize_ellipsoid;
use interrater::volume::{Grid, Mask3D};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SIDE: usize = 48;

#[derive(Debug, Serialize)]
pub struct SurfaceDemo {
    pub sdsc: f64,
    pub dsc: f64,
    pub cci: f64,
    pub surface_a: usize,
    pub surface_b: usize,
    pub close_a: usize,
    pub close_b: usize,
    /// Middle axial slice, row-major: 0 background, 1 only A, 2 only B, 3 both.
    pub slice_rows: usize,
    pub slice_cols: usize,
    pub slice: Vec<u8>,
}

/// Two spheres on a `48³` grid with in-plane spacing `spacing_mm` (1 mm between
/// slices); the second is shifted along x by `offset_mm`.
pub fn surface_demo(
    radius_a_mm: f64,
    radius_b_mm: f64,
    offset_mm: f64,
    tau_mm: f64,
    spacing_mm: f64,
) -> Result<SurfaceDemo, String> {
    let tol = ToleranceConfig::new(tau_mm).map_err(|e| e.to_string())?;
    if !(spacing_mm.is_finite() && (0.25..=2.0).contains(&spacing_mm)) {
        return Err(format!("in-plane spacing must lie in [0.25, 2] mm, got {spacing_mm}"));
    }
    let grid = Grid::new([SIDE; 3], [1.0, spacing_mm, spacing_mm]).map_err(|e| e.to_string())?;
    let mid = SIDE / 2;
    let shift = (offset_mm / spacing_mm).round() as i64;
    let cb = mid as i64 + shift;
    let extent_ok = |r: f64, cx: i64| {
        r > 0.0
            && r < (mid as f64 - 1.0)
            && ((r / spacing_mm).ceil() as i64) < cx
            && cx + (r / spacing_mm).ceil() as i64 + 1 < SIDE as i64
    };
    if !extent_ok(radius_a_mm, mid as i64) || !extent_ok(radius_b_mm, cb) {
        return Err("spheres must be positive and stay inside the 48³ grid".into());
    }
    let mut a = Mask3D::zeros(grid);
    let mut b = Mask3D::zeros(grid);
    rasterize_ellipsoid(&grid, [mid, mid, mid], [radius_a_mm; 3], &mut a);
    rasterize_ellipsoid(&grid, [mid, mid, cb as usize], [radius_b_mm; 3], &mut b);
    let agreement = surface_agreement(&a, &b, tol).map_err(|e| e.to_string())?;
    let mut slice = Vec::with_capacity(SIDE * SIDE);
    for y in 0..SIDE {
        for x in 0..SIDE {
            slice.push(a.get([mid, y, x]) as u8 | (b.get([mid, y, x]) as u8) << 1);
        }
    }
    Ok(SurfaceDemo {
        sdsc: agreement.score(),
        dsc: volumetric_dice(&a, &b).map_err(|e| e.to_string())?,
        cci: concordance_index(&a, &b).map_err(|e| e.to_string())?,
        surface_a: agreement.surface_a,
        surface_b: agreement.surface_b,
        close_a: agreement.close_a,
        close_b: agreement.close_b,
        slice_rows: SIDE,
        slice_cols: SIDE,
        slice,
    })
}

#[derive(Debug, Serialize)]
pub struct ErrorRateDemo {
    pub p_hat_mc: f64,
    pub p_hat_ac: f64,
    pub z: f64,
    pub p_value: f64,
}

/// One-sided test that manual contouring errs more often than assisted.
/// Counts may be fractional (rater averages).
pub fn error_rate_demo(mc: [f64; 3], ac: [f64; 3], pooled: bool) -> Result<ErrorRateDemo, String> {
    let mc = DetectionCounts::new(mc[0], mc[1], mc[2]);
    let ac = DetectionCounts::new(ac[0], ac[1], ac[2]);
    let variant = if pooled { ZVariant::Pooled } else { ZVariant::Unpooled };
    let r = z_test_two_proportions(mc.n_err(), mc.trials(), ac.n_err(), ac.trials(), Alternative::Greater, variant)
        .map_err(|e| e.to_string())?;
    Ok(ErrorRateDemo {
        p_hat_mc: mc.p_hat().map_err(|e| e.to_string())?,
        p_hat_ac: ac.p_hat().map_err(|e| e.to_string())?,
        z: r.statistic,
        p_value: r.p_value,
    })
}

#[derive(Debug, Serialize)]
pub struct TimeDemo {
    pub n: usize,
    pub median_mc: String,
    pub median_reduction: String,
    pub median_ratio: f64,
    pub p_value: f64,
    pub notes: Vec<String>,
}

/// Seconds, or `mm:ss`.
fn parse_time(token: &str) -> Result<f64, String> {
    let bad = || format!("cannot read {token:?} as seconds or mm:ss");
    match token.split_once(':') {
        Some((m, s)) => {
            let m: f64 = m.parse().map_err(|_| bad())?;
            let s: f64 = s.parse().map_err(|_| bad())?;
            Ok(60.0 * m + s)
        }
        None => token.parse().map_err(|_| bad()),
    }
}

fn parse_times(text: &str) -> Result<Vec<f64>, String> {
    let v = text
        .split(|c: char| c.is_whitespace() || c == ',' || c == ';')
        .filter(|t| !t.is_empty())
        .map(parse_time)
        .collect::<Result<Vec<_>, _>>()?;
    if v.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err("times must be positive".into());
    }
    Ok(v)
}

/// Paired one-sided Wilcoxon signed-rank test `t_mc > t_ac`.
pub fn time_demo(mc_text: &str, ac_text: &str) -> Result<TimeDemo, String> {
    let mc = parse_times(mc_text)?;
    let ac = parse_times(ac_text)?;
    if mc.len() != ac.len() || mc.is_empty() {
        return Err(format!("need the same non-zero number of times, got {} and {}", mc.len(), ac.len()));
    }
    let reduction: Vec<f64> = mc.iter().zip(&ac).map(|(m, a)| m - a).collect();
    let ratio: Vec<f64> = mc.iter().zip(&ac).map(|(m, a)| m / a).collect();
    let r = wilcoxon_signed_rank(&mc, &ac, Alternative::Greater).map_err(|e| e.to_string())?;
    let med = |v: &[f64]| median(v).map_err(|e| e.to_string());
    Ok(TimeDemo {
        n: mc.len(),
        median_mc: format_mmss(med(&mc)?),
        median_reduction: format_mmss(med(&reduction)?),
        median_ratio: med(&ratio)?,
        p_value: r.p_value,
        notes: r.notes,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = surfaceDice)]
pub fn surface_dice_js(
    radius_a_mm: f64,
    radius_b_mm: f64,
    offset_mm: f64,
    tau_mm: f64,
    spacing_mm: f64,
) -> Result<String, JsError> {
    to_js(surface_demo(radius_a_mm, radius_b_mm, offset_mm, tau_mm, spacing_mm))
}

#[wasm_bindgen(js_name = errorRateTest)]
#[allow(clippy::too_many_arguments)]
pub fn error_rate_js(
    mc_tp: f64,
    mc_fp: f64,
    mc_fn: f64,
    ac_tp: f64,
    ac_fp: f64,
    ac_fn: f64,
    pooled: bool,
) -> Result<String, JsError> {
    to_js(error_rate_demo([mc_tp, mc_fp, mc_fn], [ac_tp, ac_fp, ac_fn], pooled))
}

#[wasm_bindgen(js_name = timeTest)]
pub fn time_js(mc_text: &str, ac_text: &str) -> Result<String, JsError> {
    to_js(time_demo(mc_text, ac_text))
}
