use crate::matrix::RealMatrix;

/// Comparison of an analytic gradient against central finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest per-entry `|a − n| / max(|a|, |n|, floor)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Row and column of the worst relative error.
    pub worst: (usize, usize),
    pub entries: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Entries whose true gradient is below this magnitude are compared on an
/// absolute scale; a relative error is meaningless there.
const REL_FLOOR: f64 = 1e-6;

/// Checks `analytic` against `(f(x + h e_i) − f(x − h e_i)) / 2h` for every
/// entry of `x`.
pub fn check_gradient(
    f: impl Fn(&RealMatrix) -> f64,
    x: &RealMatrix,
    analytic: &RealMatrix,
    step: f64,
) -> GradCheckReport {
    assert_eq!(x.shape(), analytic.shape(), "gradient shape mismatch");
    let mut probe = x.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: (0, 0),
        entries: x.rows() * x.cols(),
    };
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let orig = x.get(r, c);
            probe.set(r, c, orig + step);
            let up = f(&probe);
            probe.set(r, c, orig - step);
            let down = f(&probe);
            probe.set(r, c, orig);
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.get(r, c);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.worst = (r, c);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let x = RealMatrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
        let f = |m: &RealMatrix| m.as_slice().iter().map(|v| v * v).sum::<f64>();
        let good = x.scale(2.0);
        assert!(check_gradient(f, &x, &good, 1e-4).passes(1e-8));
        let bad = x.scale(2.1);
        assert!(!check_gradient(f, &x, &bad, 1e-4).passes(1e-4));
    }
}
