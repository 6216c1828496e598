//! Tabulation of the truncated nonlinearity against softplus.

use std::io::Write;

use phasenet_core::net::layers::softplus;
use phasenet_photonic::truncated_sigma;

use crate::HarnessError;

/// How the per-sweep step depends on the repetition count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsPolicy {
    /// `ε = 1/(2m)`, total flow time one.
    UnitTime,
    Fixed(f64),
}

impl EpsPolicy {
    pub fn eps(self, m: usize) -> f64 {
        match self {
            EpsPolicy::UnitTime => 1.0 / (2 * m) as f64,
            EpsPolicy::Fixed(e) => e,
        }
    }
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `σ_{k,ε,m}(x)`, or `None` outside the flow's domain.
pub fn sigma_or_none(k: usize, policy: EpsPolicy, m: usize, x: f64) -> Option<f64> {
    truncated_sigma(k, policy.eps(m), m, x).ok()
}

/// `max |σ - softplus|` over `xs`; `None` if any point leaves the domain.
pub fn max_error(k: usize, policy: EpsPolicy, m: usize, xs: &[f64]) -> Option<f64> {
    xs.iter().map(|&x| sigma_or_none(k, policy, m, x).map(|s| (s - softplus(x, 1.0)).abs())).try_fold(0.0f64, |a, e| e.map(|e| a.max(e)))
}

/// CSV with columns `x,softplus,sigma_m<m>...`; domain failures are empty cells.
pub fn emit_sigma_curve<W: Write>(
    out: W,
    k: usize,
    policy: EpsPolicy,
    ms: &[usize],
    xs: &[f64],
) -> Result<(), HarnessError> {
    if ms.contains(&0) {
        return Err(HarnessError::Validation("repetition counts must be positive".into()));
    }
    if let EpsPolicy::Fixed(e) = policy {
        if !(e > 0.0) || !e.is_finite() {
            return Err(HarnessError::Validation(format!("ε must be positive, got {e}")));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x".to_string(), "softplus".to_string()];
    header.extend(ms.iter().map(|m| format!("sigma_m{m}")));
    let io = |e: csv::Error| HarnessError::Io(e.to_string());
    w.write_record(&header).map_err(io)?;
    for &x in xs {
        let mut rec = vec![x.to_string(), softplus(x, 1.0).to_string()];
        rec.extend(ms.iter().map(|&m| sigma_or_none(k, policy, m, x).map(|s| s.to_string()).unwrap_or_default()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render(k: usize, policy: EpsPolicy, ms: &[usize], xs: &[f64]) -> String {
        let mut buf = Vec::new();
        emit_sigma_curve(&mut buf, k, policy, ms, xs).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_m_list_has_two_columns() {
        let s = render(3, EpsPolicy::UnitTime, &[], &[0.0, 1.0]);
        assert!(s.lines().all(|l| l.split(',').count() == 2));
        assert_eq!(s.lines().next().unwrap(), "x,softplus");
    }

    #[test]
    fn softplus_column_at_ten() {
        let s = render(3, EpsPolicy::UnitTime, &[20], &[10.0]);
        let row: Vec<f64> = s.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert!((row[1] - 10.000045398899218).abs() < 1e-12);
    }

    #[test]
    fn domain_failures_are_empty_cells() {
        // After the shift and the linear flow, x = 10 sits beyond the order-2 pole.
        let s = render(2, EpsPolicy::Fixed(2.0), &[1], &[10.0, -1.0]);
        let rows: Vec<&str> = s.lines().skip(1).collect();
        assert!(rows[0].ends_with(','));
        assert!(!rows[1].ends_with(','));
    }

    #[test]
    fn order_zero_is_a_unit_shift() {
        for m in [1, 3, 8] {
            assert!((sigma_or_none(0, EpsPolicy::UnitTime, m, 0.25).unwrap() - 1.25).abs() < 1e-12);
        }
    }

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(-1.0, 3.0, 5), vec![-1.0, 0.0, 1.0, 2.0, 3.0]);
        assert!(linspace(0.0, 1.0, 0).is_empty());
    }
}
