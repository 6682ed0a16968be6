//! Least-squares trend fits, significance stars, confidence intervals and rank correlation.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::scalar::Real;

use super::MetricsError;

/// Closed-form simple linear regression with a two-sided slope t-test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OlsFit<T> {
    pub slope: T,
    pub intercept: T,
    /// Slope standard error; `None` with fewer than 3 points.
    pub std_err: Option<T>,
    pub t_stat: Option<T>,
    pub p_value: Option<T>,
    pub n_points: usize,
}

pub fn ols_fit<T: Real>(points: &[(T, T)]) -> Result<OlsFit<T>, MetricsError> {
    let n = points.len();
    if n < 2 {
        return Err(MetricsError::TooFewPoints(n));
    }
    let nf = T::from_count(n);
    let mx = points.iter().fold(T::zero(), |s, p| s + p.0) / nf;
    let my = points.iter().fold(T::zero(), |s, p| s + p.1) / nf;
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for &(x, y) in points {
        sxx = sxx + (x - mx) * (x - mx);
        sxy = sxy + (x - mx) * (y - my);
    }
    if sxx == T::zero() {
        return Err(MetricsError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut fit = OlsFit {
        slope,
        intercept,
        std_err: None,
        t_stat: None,
        p_value: None,
        n_points: n,
    };
    if n < 3 {
        return Ok(fit);
    }
    let sse = points.iter().fold(T::zero(), |s, &(x, y)| {
        let r = y - (intercept + slope * x);
        s + r * r
    });
    let df = n - 2;
    let std_err = (sse / T::from_count(df) / sxx).sqrt();
    fit.std_err = Some(std_err);
    if std_err == T::zero() {
        // exact line: significant unless flat
        fit.p_value = Some(if slope == T::zero() { T::one() } else { T::zero() });
        return Ok(fit);
    }
    let t = slope / std_err;
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    let p = (2.0 * dist.sf(t.as_f64().abs())).min(1.0);
    fit.t_stat = Some(t);
    fit.p_value = Some(T::lit(p));
    Ok(fit)
}

/// Significance stars: `***` p<0.001, `**` p<0.01, `*` p<0.05.
pub fn stars<T: Real>(p_value: Option<T>) -> &'static str {
    match p_value.map(Real::as_f64) {
        Some(p) if p < 0.001 => "***",
        Some(p) if p < 0.01 => "**",
        Some(p) if p < 0.05 => "*",
        _ => "",
    }
}

/// Mean of a cell with its 95% t-interval (omitted when n = 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CellStats<T> {
    pub n: usize,
    pub mean: T,
    pub sd: Option<T>,
    pub ci: Option<(T, T)>,
}

pub fn mean_ci<T: Real>(values: &[T]) -> Result<CellStats<T>, MetricsError> {
    let n = values.len();
    if n == 0 {
        return Err(MetricsError::EmptyCell);
    }
    let mean = values.iter().fold(T::zero(), |s, v| s + *v) / T::from_count(n);
    if n == 1 {
        return Ok(CellStats { n, mean, sd: None, ci: None });
    }
    let var = values.iter().fold(T::zero(), |s, v| s + (*v - mean) * (*v - mean)) / T::from_count(n - 1);
    let sd = var.sqrt();
    let q = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    let half = T::lit(q) * sd / T::from_count(n).sqrt();
    Ok(CellStats {
        n,
        mean,
        sd: Some(sd),
        ci: Some((mean - half, mean + half)),
    })
}

fn average_ranks<T: Real>(values: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = T::from_count(i + j + 2) / T::lit(2.0);
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (ties get average ranks); `None` if either side is constant.
pub fn spearman<T: Real>(x: &[T], y: &[T]) -> Result<Option<T>, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricsError::TooFewPoints(x.len()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = T::from_count(x.len());
    let mx = rx.iter().fold(T::zero(), |s, v| s + *v) / n;
    let my = ry.iter().fold(T::zero(), |s, v| s + *v) / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (a, b) in rx.iter().zip(&ry) {
        sxy = sxy + (*a - mx) * (*b - my);
        sxx = sxx + (*a - mx) * (*a - mx);
        syy = syy + (*b - my) * (*b - my);
    }
    if sxx == T::zero() || syy == T::zero() {
        return Ok(None);
    }
    Ok(Some(sxy / (sxx * syy).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(ys: &[f64]) -> Vec<(f64, f64)> {
        ys.iter().enumerate().map(|(i, y)| ((i + 1) as f64, *y)).collect()
    }

    #[test]
    fn exact_line_has_zero_p() {
        let f = ols_fit(&pts(&[2.0, 4.0, 6.0, 8.0])).unwrap();
        assert_eq!(f.slope, 2.0);
        assert_eq!(f.intercept, 0.0);
        assert_eq!(f.p_value, Some(0.0));
    }

    #[test]
    fn constant_values_are_flat() {
        let f = ols_fit(&pts(&[3.0, 3.0, 3.0])).unwrap();
        assert_eq!(f.slope, 0.0);
        assert_eq!(f.p_value, Some(1.0));
        assert_eq!(stars(f.p_value), "");
    }

    #[test]
    fn zigzag_slope() {
        let f = ols_fit(&pts(&[0.0, 1.0, 0.0, 1.0])).unwrap();
        assert!((f.slope - 0.2).abs() < 1e-15);
        assert!((f.intercept - 0.0).abs() < 1e-15);
    }

    #[test]
    fn two_df_p_value_matches_closed_form() {
        // with 2 degrees of freedom the two-sided p is 1 - |t| / sqrt(t^2 + 2)
        let f = ols_fit(&pts(&[92.2, 90.1, 84.4, 76.6])).unwrap();
        let t = f.t_stat.unwrap();
        let p = 1.0 - t.abs() / (t * t + 2.0).sqrt();
        assert!((f.p_value.unwrap() - p).abs() < 1e-9);
        assert!((f.slope + 5.25).abs() < 1e-12);
        assert!((f.intercept - 98.95).abs() < 1e-12);
        assert_eq!(stars(f.p_value), "*");
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(ols_fit(&[(1.0f64, 2.0), (1.0, 3.0)]), Err(MetricsError::DegenerateX)));
        assert!(matches!(ols_fit(&[(1.0f64, 2.0)]), Err(MetricsError::TooFewPoints(1))));
        assert_eq!(ols_fit(&[(1.0f64, 2.0), (2.0, 3.0)]).unwrap().p_value, None);
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(Some(0.004)), "**");
        assert_eq!(stars(Some(0.0009)), "***");
        assert_eq!(stars(Some(0.049)), "*");
        assert_eq!(stars(Some(0.05)), "");
        assert_eq!(stars::<f64>(None), "");
    }

    #[test]
    fn ci_uses_t_quantile() {
        let c = mean_ci(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(c.mean, 2.0);
        let (lo, hi) = c.ci.unwrap();
        // t_{0.975,2} = 4.302653
        assert!((hi - 2.0 - 4.302_652_729_7 / 3f64.sqrt()).abs() < 1e-6);
        assert!((2.0 - lo - (hi - 2.0)).abs() < 1e-12);
        let one = mean_ci(&[5.0f32]).unwrap();
        assert_eq!((one.mean, one.ci), (5.0, None));
        assert!(mean_ci::<f64>(&[]).is_err());
    }

    #[test]
    fn spearman_handles_ties() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), None);
        let r: f64 = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0]).unwrap().unwrap();
        assert!((r - 0.948_683_298_050_513_8).abs() < 1e-12);
    }
}
