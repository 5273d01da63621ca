//! Plain CSV rendering shared by the graph, certificate and trace exports.

use nalgebra::DMatrix;

/// Full-precision float formatting: 17 significant digits, round-trippable.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Row-major CSV with a header row. The first column holds `row_labels`
/// under the heading `corner`.
pub fn matrix_csv(corner: &str, row_labels: &[String], col_labels: &[String], m: &DMatrix<f64>) -> String {
    assert_eq!(row_labels.len(), m.nrows());
    assert_eq!(col_labels.len(), m.ncols());
    let mut out = String::new();
    out.push_str(corner);
    for c in col_labels {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, label) in row_labels.iter().enumerate() {
        out.push_str(label);
        for j in 0..m.ncols() {
            out.push(',');
            out.push_str(&fmt_f64(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}
