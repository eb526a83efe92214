//! Number formatting shared by every text output.

/// Formats a binary64 with 17 significant digits in scientific notation,
/// which is enough for a lossless round trip.
pub fn f64_17(x: f64) -> String {
    format!("{x:.16e}")
}
