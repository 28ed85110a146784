/// Scientific notation with 17 significant digits, enough to round-trip any
/// `f64` and stable across runs.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}
