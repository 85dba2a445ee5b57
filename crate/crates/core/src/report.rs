//! Convergence tables shared by the lifting and product experiments.

use serde::{Deserialize, Serialize};

/// One quantity tabulated along an ε-schedule against its limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub label: String,
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub target: f64,
    pub gaps: Vec<f64>,
    /// Least-squares slope of `ln gap` against `ln ε`.
    pub rate: Option<f64>,
    pub tolerance: f64,
    /// Gaps never increase along the schedule.
    pub monotone: bool,
    /// Final gap within tolerance.
    pub pass: bool,
}

impl ConvergenceReport {
    pub fn new(
        label: impl Into<String>,
        eps: Vec<f64>,
        values: Vec<f64>,
        target: f64,
        tolerance: f64,
    ) -> Self {
        assert_eq!(eps.len(), values.len());
        let gaps: Vec<f64> = values.iter().map(|v| (v - target).abs()).collect();
        let floor = 1e-14 * target.abs().max(values.iter().fold(1.0, |m, v| m.max(v.abs())));
        let rate = fit_rate(&eps, &gaps, floor);
        let monotone = gaps.windows(2).all(|w| w[1] <= w[0] || w[1] <= floor);
        let pass = gaps.last().is_none_or(|&g| g <= tolerance);
        Self {
            label: label.into(),
            eps,
            values,
            target,
            gaps,
            rate,
            tolerance,
            monotone,
            pass,
        }
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.gaps.last().copied()
    }
}

/// Slope of the least-squares line through `(ln x, ln y)`, ignoring
/// entries with `y <= floor`. `None` with fewer than two usable points.
pub fn fit_rate(x: &[f64], y: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(&a, &b)| a > 0.0 && b > floor)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_of_power_law() {
        let x = [0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        let r = fit_rate(&x, &y, 0.0).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_sequence_has_no_rate_and_passes() {
        let r = ConvergenceReport::new("c", vec![0.1, 0.05], vec![2.0, 2.0], 2.0, 1e-12);
        assert_eq!(r.gaps, vec![0.0, 0.0]);
        assert!(r.rate.is_none());
        assert!(r.pass && r.monotone);
    }

    #[test]
    fn verdict_uses_final_gap() {
        let r = ConvergenceReport::new("x", vec![0.1, 0.05, 0.02], vec![1.5, 1.1, 1.3], 1.0, 0.2);
        assert!(!r.pass);
        assert!(!r.monotone);
    }
}
