//! Small statistics helpers for the fairness and benchmark harnesses.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
}

/// Pearson goodness-of-fit of `observed` against `probs` (normalized here).
/// `None` for fewer than two categories or no observations.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> Option<ChiSquare> {
    assert_eq!(observed.len(), probs.len(), "one probability per category");
    let n: u64 = observed.iter().sum();
    let total: f64 = probs.iter().sum();
    if observed.len() < 2 || n == 0 || total <= 0.0 {
        return None;
    }
    let statistic = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = n as f64 * p / total;
            (o as f64 - e).powi(2) / e
        })
        .sum::<f64>();
    let dof = observed.len() as u32 - 1;
    let p_value = ChiSquared::new(f64::from(dof)).expect("dof is positive").sf(statistic);
    Some(ChiSquare { statistic, dof, p_value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit { slope, intercept: my - slope * mx, r_squared })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub median: f64,
    /// Distribution-free 95% interval for the median.
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
}

/// Median and its order-statistic confidence interval. Ranks come from the
/// normal approximation to Binomial(n, 1/2), clamped to the sample.
pub fn summarize(samples: &[f64]) -> Option<Summary> {
    if samples.is_empty() {
        return None;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
    let half = 1.959_964 * (n as f64).sqrt() / 2.0;
    let lo = ((n as f64 / 2.0 - half).floor().max(1.0) as usize).min(n) - 1;
    let hi = ((n as f64 / 2.0 + half).ceil() as usize).clamp(1, n) - 1;
    Some(Summary { median, ci_low: v[lo], ci_high: v[hi], samples: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Reference statistics computed with scipy.stats.

    #[test]
    fn chi_square_matches_reference() {
        let r = chi_square(&[5050, 4950], &[0.5, 0.5]).unwrap();
        assert!((r.statistic - 1.0).abs() < 1e-12);
        assert!((r.p_value - 0.317_310_507_862_911_15).abs() < 1e-9);
        let r = chi_square(&[30, 20, 10], &[1.0, 1.0, 1.0]).unwrap();
        assert!((r.statistic - 10.0).abs() < 1e-12);
        assert!((r.p_value - 0.006_737_946_999_085_468).abs() < 1e-9);
        assert_eq!(r.dof, 2);
    }

    #[test]
    fn chi_square_weights_are_normalized() {
        let a = chi_square(&[200, 100], &[2.0, 1.0]).unwrap();
        assert!(a.statistic.abs() < 1e-12);
        assert!((a.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_fit_matches_reference() {
        let f = linear_fit(&[10.0, 20.0, 30.0, 50.0, 100.0], &[1.1, 2.0, 3.2, 5.1, 9.8]).unwrap();
        assert!((f.slope - 0.096_771_653_543_307_09).abs() < 1e-12);
        assert!((f.intercept - 0.175_590_551_181_102_23).abs() < 1e-12);
        assert!((f.r_squared - 0.999_179_721_118_410_6).abs() < 1e-12);
    }

    #[test]
    fn median_interval() {
        let s = summarize(&[5.0, 1.0, 3.0]).unwrap();
        assert_eq!(s.median, 3.0);
        assert_eq!((s.ci_low, s.ci_high), (1.0, 5.0));
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize(&xs).unwrap();
        assert_eq!(s.median, 50.5);
        // Ranks 40 and 60 (1-based) for n = 100.
        assert_eq!((s.ci_low, s.ci_high), (40.0, 60.0));
    }

    proptest! {
        #[test]
        fn median_lies_inside_its_interval(xs in prop::collection::vec(-1e6f64..1e6, 1..200)) {
            let s = summarize(&xs).unwrap();
            prop_assert!(s.ci_low <= s.median && s.median <= s.ci_high);
        }

        #[test]
        fn exact_lines_fit_perfectly(a in -100f64..100.0, b in -100f64..100.0) {
            let xs = [10.0, 20.0, 30.0, 50.0, 100.0];
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let f = linear_fit(&xs, &ys).unwrap();
            prop_assert!((f.slope - a).abs() < 1e-9);
            prop_assert!(f.r_squared > 1.0 - 1e-9);
        }
    }
}
