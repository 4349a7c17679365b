use crate::error::{Error, Result};

/// Percentile by linear interpolation between closest ranks: with the values
/// sorted ascending as `v_0 ≤ … ≤ v_{n-1}` and `x = p/100 · (n − 1)`,
/// the result is `v_⌊x⌋ + (x − ⌊x⌋) · (v_⌈x⌉ − v_⌊x⌋)`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter(
            "percentile of an empty list".into(),
        ));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter(
            "percentile of a list containing NaN".into(),
        ));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let x = p / 100.0 * (v.len() - 1) as f64;
    let lo = x.floor() as usize;
    let hi = x.ceil() as usize;
    if lo == hi {
        return Ok(v[lo]);
    }
    Ok(v[lo] + (x - lo as f64) * (v[hi] - v[lo]))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (divisor `n − 1`) over `√n`; zero for `n < 2`.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    var.sqrt() / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((percentile(&v, 10.0).unwrap() - 1.9).abs() < 1e-12);
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 10.0);
        assert_eq!(percentile(&[4.0; 7], 37.0).unwrap(), 4.0);
        assert_eq!(percentile(&[3.0], 10.0).unwrap(), 3.0);
        assert!(percentile(&[], 10.0).is_err());
        assert!(percentile(&[1.0], 101.0).is_err());
        assert_eq!(standard_error(&[5.0]), 0.0);
        // sample std of {1, 3} is √2, over √2 → 1
        assert!((standard_error(&[1.0, 3.0]) - 1.0).abs() < 1e-15);
    }
}
