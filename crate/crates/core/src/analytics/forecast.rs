//! Holt's linear method and seasonal-naive forecasting.
//!
//! Both fitters take the indices flagged as anomalous; such observations are
//! replaced by the model's own one-step expectation before fitting and are
//! left out of the in-sample error.

use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    /// Forecasts for steps 1..=horizon after the last observation.
    pub forecasts: Vec<f64>,
    /// Mean absolute one-step error over non-anomalous fitted points.
    pub mae: f64,
}

fn mae(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        0.0
    } else {
        errors.iter().sum::<f64>() / errors.len() as f64
    }
}

/// Holt's double exponential smoothing with `level₀ = x₀` and
/// `trend₀ = x₁ − x₀`. Needs at least two points.
pub fn holt(xs: &[f64], anomalous: &BTreeSet<usize>, alpha: f64, beta: f64, horizon: usize) -> Fit {
    assert!(xs.len() >= 2, "holt needs two observations");
    let mut level = xs[0];
    let x1 = if anomalous.contains(&1) { level } else { xs[1] };
    let mut trend = x1 - xs[0];
    let mut errors = Vec::new();
    for (t, &raw) in xs.iter().enumerate().skip(1) {
        let expected = level + trend;
        let x = if anomalous.contains(&t) {
            level
        } else {
            errors.push((expected - raw).abs());
            raw
        };
        let previous = level;
        level = alpha * x + (1.0 - alpha) * (level + trend);
        trend = beta * (level - previous) + (1.0 - beta) * trend;
    }
    Fit {
        forecasts: (1..=horizon).map(|h| level + h as f64 * trend).collect(),
        mae: mae(&errors),
    }
}

/// Repeats the last full period: `x̂(t+k) = x(t+k−p)`. Needs `p ≤ len`.
pub fn seasonal_naive(
    xs: &[f64],
    anomalous: &BTreeSet<usize>,
    period: usize,
    horizon: usize,
) -> Fit {
    assert!(
        period > 0 && period <= xs.len(),
        "period must fit the series"
    );
    let mut clean: Vec<f64> = Vec::with_capacity(xs.len());
    let mut errors = Vec::new();
    for (t, &raw) in xs.iter().enumerate() {
        let expected = if t >= period {
            Some(clean[t - period])
        } else {
            clean.last().copied()
        };
        if anomalous.contains(&t) {
            clean.push(expected.unwrap_or(raw));
            continue;
        }
        if t >= period {
            errors.push((clean[t - period] - raw).abs());
        }
        clean.push(raw);
    }
    let n = clean.len();
    Fit {
        forecasts: (0..horizon)
            .map(|k| clean[n - period + k % period])
            .collect(),
        mae: mae(&errors),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn none() -> BTreeSet<usize> {
        BTreeSet::new()
    }

    #[test]
    fn constant_series_is_exact() {
        let xs = [4.5; 10];
        let h = holt(&xs, &none(), 0.5, 0.3, 3);
        assert_eq!(h.forecasts, [4.5; 3]);
        assert_eq!(h.mae, 0.0);
        let s = seasonal_naive(&xs, &none(), 2, 3);
        assert_eq!(s.forecasts, [4.5; 3]);
        assert_eq!(s.mae, 0.0);
    }

    #[test]
    fn line_continues() {
        let h = holt(&[1.0, 2.0, 3.0, 4.0, 5.0], &none(), 0.5, 0.3, 2);
        assert!((h.forecasts[0] - 6.0).abs() < 1e-9);
        assert!((h.forecasts[1] - 7.0).abs() < 1e-9);
    }

    #[test]
    fn period_two_repeats() {
        let s = seasonal_naive(&[1.0, 2.0, 1.0, 2.0, 1.0, 2.0], &none(), 2, 3);
        assert_eq!(s.forecasts, [1.0, 2.0, 1.0]);
        assert_eq!(s.mae, 0.0);
    }

    #[test]
    fn anomalies_do_not_pull_the_fit() {
        let mut xs: Vec<f64> = (0..10).map(f64::from).collect();
        xs[5] = 100.0;
        let flagged = holt(&xs, &BTreeSet::from([5]), 0.5, 0.3, 1);
        let unflagged = holt(&xs, &none(), 0.5, 0.3, 1);
        assert!((flagged.forecasts[0] - 10.0).abs() < (unflagged.forecasts[0] - 10.0).abs());
    }
}
