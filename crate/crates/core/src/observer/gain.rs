/// Coefficients `k_j = C(d, j)` so that `s^d + k_1 s^{d-1} + ... + k_d = (s + 1)^d`.
pub fn design_gain(d: usize) -> Vec<f64> {
    let mut k = Vec::with_capacity(d);
    let mut c = 1.0;
    for j in 1..=d {
        c = c * (d - j + 1) as f64 / j as f64;
        k.push(c.round());
    }
    k
}

/// Routh–Hurwitz test for `s^d + k_1 s^{d-1} + ... + k_d`: true when every
/// root has negative real part.
pub fn is_hurwitz(k: &[f64]) -> bool {
    let d = k.len();
    if d == 0 {
        return true;
    }
    let coeffs: Vec<f64> = std::iter::once(1.0).chain(k.iter().copied()).collect();
    let width = d / 2 + 1;
    let mut prev: Vec<f64> = (0..width).map(|j| coeffs.get(2 * j).copied().unwrap_or(0.0)).collect();
    let mut cur: Vec<f64> = (0..width).map(|j| coeffs.get(2 * j + 1).copied().unwrap_or(0.0)).collect();
    for _ in 0..d {
        if !(cur[0] > 0.0) {
            return false;
        }
        let next: Vec<f64> = (0..width)
            .map(|j| {
                let a = prev.get(j + 1).copied().unwrap_or(0.0);
                let b = cur.get(j + 1).copied().unwrap_or(0.0);
                (cur[0] * a - prev[0] * b) / cur[0]
            })
            .collect();
        prev = cur;
        cur = next;
    }
    true
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;

    /// Max real part of the roots via the companion matrix.
    fn max_real_root(k: &[f64]) -> f64 {
        let d = k.len();
        let mut c = DMatrix::zeros(d, d);
        for j in 0..d {
            c[(0, j)] = -k[j];
        }
        for i in 1..d {
            c[(i, i - 1)] = 1.0;
        }
        c.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn binomial_gains() {
        assert_eq!(design_gain(3), vec![3.0, 3.0, 1.0]);
        assert_eq!(design_gain(4), vec![4.0, 6.0, 4.0, 1.0]);
        for d in 1..=8 {
            assert!(is_hurwitz(&design_gain(d)));
        }
    }

    #[test]
    fn routh_agrees_with_companion_roots() {
        let cases: &[&[f64]] = &[
            &[1.0, 1.0, 2.0],
            &[2.0, 3.0, 1.0],
            &[1.0, -1.0],
            &[0.0, 1.0],
            &[3.0, 3.0, 1.0, 0.5],
            &[1.0, 5.0, 1.0, 2.0],
            &[6.0, 15.0, 20.0, 15.0, 6.0, 1.0],
        ];
        for k in cases {
            let stable = max_real_root(k) < -1e-9;
            assert_eq!(is_hurwitz(k), stable, "{k:?}");
        }
    }
}
