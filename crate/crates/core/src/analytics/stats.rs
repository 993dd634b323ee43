//! Plain numeric helpers over sample slices.

use crate::twin::Sample;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Least-squares slope of `x` against `t` (seconds). Zero when all `t` agree.
pub fn ols_slope(ts_s: &[f64], xs: &[f64]) -> f64 {
    let tm = mean(ts_s);
    let xm = mean(xs);
    let (mut num, mut den) = (0.0, 0.0);
    for (t, x) in ts_s.iter().zip(xs) {
        num += (t - tm) * (x - xm);
        den += (t - tm).powi(2);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Sample autocorrelation at `lag`; `None` for a constant series.
pub fn autocorrelation(xs: &[f64], lag: usize) -> Option<f64> {
    let m = mean(xs);
    let den: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if den == 0.0 || lag >= xs.len() {
        return None;
    }
    let num: f64 = (0..xs.len() - lag)
        .map(|i| (xs[i] - m) * (xs[i + lag] - m))
        .sum();
    Some(num / den)
}

/// Lag of the highest autocorrelation peak in `[2, n/2]` above `threshold`.
/// A peak must exceed the previous lag and not be exceeded by the next, so a
/// slowly decaying trend is not mistaken for a cycle. Ties go to the shorter lag.
pub fn seasonality_period(xs: &[f64], threshold: f64) -> Option<usize> {
    let n = xs.len();
    if n < 4 {
        return None;
    }
    let max_lag = n / 2;
    let acf: Vec<f64> = (0..=max_lag + 1)
        .map(|k| autocorrelation(xs, k).unwrap_or(f64::NAN))
        .collect();
    if acf[0].is_nan() {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for k in 2..=max_lag {
        let r = acf[k];
        let rises = r > acf[k - 1];
        let holds = k + 1 >= n || acf[k + 1].is_nan() || r >= acf[k + 1];
        if rises && holds && r > threshold && best.is_none_or(|(_, b)| r > b) {
            best = Some((k, r));
        }
    }
    best.map(|(k, _)| k)
}

/// Indices whose |z| exceeds `threshold`; none when the spread is zero.
pub fn z_anomalies(xs: &[f64], threshold: f64) -> Vec<(usize, f64)> {
    let m = mean(xs);
    let sd = population_std(xs);
    if sd == 0.0 || !sd.is_finite() {
        return Vec::new();
    }
    xs.iter()
        .enumerate()
        .map(|(i, x)| (i, (x - m) / sd))
        .filter(|(_, z)| z.abs() > threshold)
        .collect()
}

/// Pearson correlation; `None` when either side is constant or too short.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Median gap between consecutive timestamps; `None` below two samples.
pub fn median_gap(samples: &[Sample]) -> Option<u64> {
    let mut gaps: Vec<u64> = samples
        .windows(2)
        .map(|w| w[1].timestamp_ms - w[0].timestamp_ms)
        .collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_unstable();
    Some(gaps[(gaps.len() - 1) / 2])
}

/// Pairs each sample of `a` with the nearest-in-time sample of `b`, keeping
/// pairs no further apart than `tolerance_ms`.
pub fn align_nearest(a: &[Sample], b: &[Sample], tolerance_ms: u64) -> (Vec<f64>, Vec<f64>) {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    if b.is_empty() {
        return (xs, ys);
    }
    for s in a {
        let i = b.partition_point(|x| x.timestamp_ms < s.timestamp_ms);
        let candidates = [i.checked_sub(1), (i < b.len()).then_some(i)];
        let nearest = candidates
            .into_iter()
            .flatten()
            .min_by_key(|&j| b[j].timestamp_ms.abs_diff(s.timestamp_ms));
        if let Some(j) = nearest {
            if b[j].timestamp_ms.abs_diff(s.timestamp_ms) <= tolerance_ms {
                xs.push(s.value);
                ys.push(b[j].value);
            }
        }
    }
    (xs, ys)
}
