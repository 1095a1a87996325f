//! Report rendering shared by the experiment scenarios.
//!
//! Experiment CSVs are the plotting contract: fixed headers, `\n` line
//! endings, and floats printed with six decimals so identical runs produce
//! identical bytes.

/// Fixed-precision float formatting for CSV cells.
pub fn format_f64(v: f64) -> String {
    format!("{v:.6}")
}
