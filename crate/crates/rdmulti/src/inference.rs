use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided 95% normal critical value.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Two-sided normal p-value of a t statistic.
pub fn normal_p(t: f64) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { f64::NAN } else { 0.0 };
    }
    libm::erfc(t.abs() / std::f64::consts::SQRT_2)
}

/// Upper tail of the chi-squared law; `None` when `dof == 0` or the
/// statistic is not finite.
pub fn chi2_p(stat: f64, dof: usize) -> Option<f64> {
    if dof == 0 || !stat.is_finite() {
        return None;
    }
    let c = ChiSquared::new(dof as f64).ok()?;
    Some(c.sf(stat.max(0.0)))
}
