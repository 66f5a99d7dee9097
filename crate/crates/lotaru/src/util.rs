//! Small numeric helpers shared across modules.

/// Standard median: mean of the two middle values for even counts.
///
/// Note the estimator's median fallback deliberately uses the lower median
/// instead; that variant lives next to the fallback model.
pub(crate) fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Linear-interpolation quantile (the common "type 7" rule) on a sorted slice.
/// `q` must be in [0, 1].
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&q));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Render `x` with six significant digits, plain notation.
///
/// Report files are byte-compared across runs, so the formatting must be a
/// pure function of the value.
pub(crate) fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    if magnitude > 5 {
        // Round to six significant digits before printing as an integer.
        let scale = 10f64.powi(magnitude - 5);
        format!("{:.0}", (x / scale).round() * scale)
    } else {
        format!("{:.*}", decimals, x)
    }
}
