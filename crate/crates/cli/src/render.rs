//! Binary PPM (P6) heatmaps with a fixed five-stop color ramp.
//!
//! The value-to-color mapping is linear between `scale_min` and `scale_max`
//! (the field's own finite range unless the caller pins a shared scale).
//! NaN pixels render in a sentinel gray.

use std::path::Path;

use sobolmap::field::GridField;

use crate::CliError;

const RAMP: [(f64, [u8; 3]); 5] = [
    (0.00, [10, 10, 96]),
    (0.25, [0, 120, 255]),
    (0.50, [245, 245, 230]),
    (0.75, [255, 140, 0]),
    (1.00, [160, 0, 0]),
];

const NAN_COLOR: [u8; 3] = [128, 128, 128];

fn ramp_color(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    for w in RAMP.windows(2) {
        let (t0, c0) = w[0];
        let (t1, c1) = w[1];
        if t <= t1 {
            let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            let mut out = [0u8; 3];
            for i in 0..3 {
                out[i] = (c0[i] as f64 + f * (c1[i] as f64 - c0[i] as f64)).round() as u8;
            }
            return out;
        }
    }
    RAMP[RAMP.len() - 1].1
}

/// Range actually used for a field under optional pinned bounds.
pub fn scale_range(field: &GridField, scale_min: Option<f64>, scale_max: Option<f64>) -> (f64, f64) {
    let finite: Vec<f64> = field.values().iter().copied().filter(|v| v.is_finite()).collect();
    let data_min = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let data_max = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = scale_min.unwrap_or(data_min);
    let hi = scale_max.unwrap_or(data_max);
    (lo, hi)
}

/// Render to `P6` bytes.
pub fn render_ppm(field: &GridField, scale_min: Option<f64>, scale_max: Option<f64>) -> Vec<u8> {
    let (lo, hi) = scale_range(field, scale_min, scale_max);
    let span = hi - lo;
    let mut out = Vec::with_capacity(32 + field.len() * 3);
    out.extend_from_slice(format!("P6\n{} {}\n255\n", field.nc(), field.nr()).as_bytes());
    for &v in field.values() {
        let color = if !v.is_finite() {
            NAN_COLOR
        } else if span > 0.0 {
            ramp_color((v - lo) / span)
        } else {
            ramp_color(0.5)
        };
        out.extend_from_slice(&color);
    }
    out
}

pub fn write_ppm(
    field: &GridField,
    path: &Path,
    scale_min: Option<f64>,
    scale_max: Option<f64>,
) -> Result<(), CliError> {
    let bytes = render_ppm(field, scale_min, scale_max);
    std::fs::write(path, bytes)
        .map_err(|e| CliError::stage(format!("cannot write {}: {e}", path.display())))
}
