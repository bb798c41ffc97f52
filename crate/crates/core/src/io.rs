//! Text output helpers shared by the exporters.

use crate::dualsolver::Carrier;

/// `x` with 15 significant digits in scientific notation.
pub fn fmt_sig(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.14e}")
    } else {
        format!("{x}")
    }
}

/// Carrier samples as CSV with columns `t, q_1..q_n, p_1..p_n`.
pub fn carrier_csv(carrier: &Carrier) -> String {
    let d = carrier.center.len();
    let n = d / 2;
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",q_{i}"));
    }
    for i in 1..=n {
        out.push_str(&format!(",p_{i}"));
    }
    out.push('\n');
    for (t, x) in &carrier.samples {
        out.push_str(&fmt_sig(*t));
        for v in x.iter() {
            out.push(',');
            out.push_str(&fmt_sig(*v));
        }
        out.push('\n');
    }
    out
}
