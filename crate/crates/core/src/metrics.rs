//! Point-cloud and endpoint metrics.

/// Mean squared L2 distance between paired endpoints.
///
/// Panics if the clouds differ in length or are empty; callers pair the
/// clouds by construction.
pub fn endpoint_mse(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired clouds must match in length");
    assert!(!a.is_empty(), "need at least one pair");
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
        .sum();
    total / a.len() as f64
}

/// Energy distance between two sample clouds: the square root of the
/// U-statistic `2 E|X-Y| - E|X-X'| - E|Y-Y'|`, clamped at zero (the
/// unbiased within-cloud means can push the estimate slightly negative).
pub fn energy_distance(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    assert!(x.len() >= 2 && y.len() >= 2, "need at least two samples per cloud");
    let cross = pair_mean_cross(x, y);
    let within_x = pair_mean_within(x);
    let within_y = pair_mean_within(y);
    (2.0 * cross - within_x - within_y).max(0.0).sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

fn pair_mean_cross(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for a in x {
        for b in y {
            acc += dist(a, b);
        }
    }
    acc / (x.len() * y.len()) as f64
}

fn pair_mean_within(x: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            acc += dist(&x[i], &x[j]);
        }
    }
    2.0 * acc / (n * (n - 1)) as f64
}
