use statrs::distribution::{ContinuousCDF, StudentsT};

/// Sample mean and the half-width of the two-sided 95% Student-t interval.
/// The half-width is zero for fewer than two samples.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    (mean, t * (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_tabulated_quantile() {
        // t_{0.975, 4} = 2.7764451
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (m, h) = mean_ci95(&xs);
        assert_eq!(m, 3.0);
        let sd = (2.5f64).sqrt();
        assert!((h - 2.776_445_1 * sd / 5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(mean_ci95(&[7.0]), (7.0, 0.0));
        assert!(mean_ci95(&[]).0.is_nan());
    }
}
