//! Soft-attention primitives: numerically stable softmax and the dot score.

use crate::{Error, Result};

/// Softmax with max-subtraction. Errors on an empty or non-finite input.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Shape("softmax of an empty vector".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!("non-finite attention score {bad}")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    Ok(out)
}

/// Vector-Jacobian product of softmax: given `y = softmax(x)` and `dL/dy`,
/// returns `dL/dx = y * (dy - <dy, y>)`.
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    y.iter().zip(dy).map(|(yi, di)| yi * (di - dot)).collect()
}

pub fn dot_score(h: &[f64], q: &[f64]) -> Result<f64> {
    if h.len() != q.len() {
        return Err(Error::Shape(format!(
            "dot score of vectors with lengths {} and {}",
            h.len(),
            q.len()
        )));
    }
    Ok(h.iter().zip(q).map(|(a, b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Error-free product via fused multiply-add.
    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let z = s - a;
        (s, (a - (s - z)) + (b - z))
    }

    /// Compensated dot product (twice-working-precision accuracy).
    fn dot2(x: &[f64], y: &[f64]) -> f64 {
        let (mut s, mut c) = (0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            let (p, pe) = two_prod(*a, *b);
            let (t, se) = two_sum(s, p);
            s = t;
            c += pe + se;
        }
        s + c
    }

    /// Direct exp / compensated-sum evaluation, no max shift.
    fn softmax_oracle(x: &[f64]) -> Vec<f64> {
        let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let (mut s, mut c) = (0.0, 0.0);
        for v in &e {
            let (t, err) = two_sum(s, *v);
            s = t;
            c += err;
        }
        let total = s + c;
        e.iter().map(|v| v / total).collect()
    }

    #[test]
    fn uniform_scores_give_uniform_weights() {
        assert_eq!(softmax(&[0.0; 4]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn shift_invariance() {
        let d = 0.37;
        for c in [-50.0, 3.0, 200.0] {
            let a = softmax(&[c, c + d]).unwrap();
            let b = softmax(&[0.0, d]).unwrap();
            // `c + d` itself rounds at the scale of `c`.
            let tol = 4.0 * f64::EPSILON * c.abs().max(1.0);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < tol);
            }
        }
    }

    #[test]
    fn matches_high_precision_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let got = softmax(&x).unwrap();
            for (g, w) in got.iter().zip(softmax_oracle(&x)) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_scores_rejected() {
        assert!(matches!(softmax(&[0.0, f64::NAN]), Err(Error::Numerical(_))));
        assert!(matches!(softmax(&[f64::INFINITY, 0.0]), Err(Error::Numerical(_))));
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn dot_score_cases() {
        let q = [1.5, -2.0, 0.25];
        assert_eq!(dot_score(&[0.0; 3], &q).unwrap(), 0.0);
        for j in 0..3 {
            let mut e = [0.0; 3];
            e[j] = 1.0;
            assert_eq!(dot_score(&e, &q).unwrap(), q[j]);
        }
        assert!(matches!(dot_score(&[1.0], &q), Err(Error::Shape(_))));
    }

    #[test]
    fn dot_score_matches_compensated_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let h: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
            let q: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!((dot_score(&h, &q).unwrap() - dot2(&h, &q)).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let x = [0.3, -1.2, 0.8, 0.1];
        let dy = [0.5, -0.25, 1.0, 2.0];
        let y = softmax(&x).unwrap();
        let g = softmax_backward(&y, &dy);
        let f = |x: &[f64]| -> f64 {
            softmax(x).unwrap().iter().zip(&dy).map(|(a, b)| a * b).sum()
        };
        for i in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let num = (f(&xp) - f(&xm)) / 2e-6;
            assert!((num - g[i]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(x in prop::collection::vec(-30.0f64..30.0, 1..20)) {
            let y = softmax(&x).unwrap();
            prop_assert!(y.iter().all(|v| *v >= 0.0));
            prop_assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn dot_score_is_bilinear(
            h in prop::collection::vec(-3.0f64..3.0, 8),
            g in prop::collection::vec(-3.0f64..3.0, 8),
            q in prop::collection::vec(-3.0f64..3.0, 8),
            a in -2.0f64..2.0,
        ) {
            let hg: Vec<f64> = h.iter().zip(&g).map(|(x, y)| a * x + y).collect();
            let lhs = dot_score(&hg, &q).unwrap();
            let rhs = a * dot_score(&h, &q).unwrap() + dot_score(&g, &q).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
