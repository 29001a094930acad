//! Small numerical helpers shared by the solvers.

/// `log Σ e^{x_i}` with max extraction. Returns `-inf` for an empty input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn max_of(xs: &[f64]) -> f64 {
    xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_of(xs: &[f64]) -> f64 {
    xs.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Neville evaluation at `h = 0` of the polynomial through `(h_i, y_i)`.
pub fn extrapolate_to_zero(hs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(hs.len(), ys.len());
    let mut p = ys.to_vec();
    let n = p.len();
    for level in 1..n {
        for i in 0..n - level {
            let (h0, h1) = (hs[i], hs[i + level]);
            p[i] = (h1 * p[i] - h0 * p[i + 1]) / (h1 - h0);
        }
    }
    p[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_is_stable() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn neville_recovers_polynomial() {
        let hs = [0.5, 0.25, 0.125];
        let ys: Vec<f64> = hs.iter().map(|h| 3.0 + 2.0 * h - h * h).collect();
        assert!((extrapolate_to_zero(&hs, &ys) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
