use crate::error::{Error, Result};
use crate::scalar::Real;

/// `S_l = sum_{i >= 0} (i + 1)^(l - 1) q^i`.
///
/// Summed term by term until the geometric bound on the remainder drops below
/// `tol`. The term ratio `((i + 2) / (i + 1))^(l - 1) q` is monotone in `i` and
/// tends to `q`, so `max(ratio, q)` bounds every later ratio. For integer `l`
/// the result is cross-checked against [`s_ell_closed_form`].
pub fn s_ell<T: Real>(q: T, ell: T, tol: T) -> Result<T> {
    if !(q >= T::zero()) {
        return Err(Error::Domain(format!("q must be >= 0, got {}", q.as_f64())));
    }
    if !(q < T::one()) {
        return Err(Error::SeriesDivergent { q: q.as_f64() });
    }
    if !(ell >= T::one()) {
        return Err(Error::Domain(format!("order must be >= 1, got {}", ell.as_f64())));
    }
    if q == T::zero() {
        return Ok(T::one());
    }
    let tol = T::resolvable(tol);
    let power = ell - T::one();
    let term = |i: usize| T::from_count(i + 1).powf(power) * q.powi(i as i32);
    let mut sum = T::zero();
    let mut i = 0usize;
    loop {
        let a = term(i);
        sum = sum + a;
        let next = term(i + 1);
        let ratio = (T::from_count(i + 3) / T::from_count(i + 2)).powf(power) * q;
        let r = ratio.max(q);
        if r < T::one() && next / (T::one() - r) <= tol * sum.max(T::one()) {
            sum = sum + next;
            break;
        }
        i += 1;
        if i > 10_000_000 {
            return Err(Error::SeriesDivergent { q: q.as_f64() });
        }
    }
    if ell == ell.round() && ell <= T::lit(30.0) {
        let closed = s_ell_closed_form(q, ell.to_usize().unwrap_or(1));
        let scale = sum.abs().max(T::one());
        if (closed - sum).abs() > T::resolvable(T::lit(1e-9)) * scale {
            return Err(Error::SeriesMismatch {
                summed: sum.as_f64(),
                closed: closed.as_f64(),
            });
        }
    }
    Ok(sum)
}

/// Closed form for integer `l >= 1` via `sum_k k^m x^k = (x d/dx)^m 1/(1-x)`
/// with `m = l - 1`.
///
/// The operator is applied symbolically to `P(x) / (1 - x)^n`:
/// `x d/dx [P / (1-x)^n] = [x P' (1 - x) + n x P] / (1 - x)^(n+1)`.
/// For `m >= 1` the numerator has a factor `x`, which is divided out to turn
/// `sum_k k^m q^k` into `sum_i (i+1)^m q^i`.
pub fn s_ell_closed_form<T: Real>(q: T, ell: usize) -> T {
    assert!(ell >= 1, "order must be >= 1");
    let m = ell - 1;
    // numerator coefficients, lowest degree first
    let mut numer: Vec<f64> = vec![1.0];
    let mut n = 1usize;
    for _ in 0..m {
        let deg = numer.len();
        let mut next = vec![0.0; deg + 1];
        for (j, &c) in numer.iter().enumerate() {
            // x P' (1 - x): j c x^j - j c x^(j+1)
            next[j] += j as f64 * c;
            next[j + 1] -= j as f64 * c;
            // n x P
            next[j + 1] += n as f64 * c;
        }
        numer = next;
        n += 1;
    }
    let coeffs: &[f64] = if m >= 1 { &numer[1..] } else { &numer };
    let value = coeffs
        .iter()
        .rev()
        .fold(T::zero(), |acc, &c| acc * q + T::lit(c));
    value / (T::one() - q).powi(n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn half_values() {
        assert_abs_diff_eq!(s_ell(0.5, 1.0, 1e-13).unwrap(), 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s_ell(0.5, 2.0, 1e-13).unwrap(), 4.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s_ell(0.5, 3.0, 1e-13).unwrap(), 12.0, epsilon = 1e-10);
    }

    #[test]
    fn closed_forms_small_orders() {
        for i in 1..10 {
            let q = i as f64 / 10.0;
            assert_abs_diff_eq!(s_ell_closed_form(q, 1), 1.0 / (1.0 - q), epsilon = 1e-12);
            assert_abs_diff_eq!(s_ell_closed_form(q, 2), 1.0 / (1.0 - q).powi(2), epsilon = 1e-10);
            assert_abs_diff_eq!(
                s_ell_closed_form(q, 3),
                (1.0 + q) / (1.0 - q).powi(3),
                epsilon = 1e-9
            );
            // Eulerian polynomial A_3 = 1 + 4x + x^2
            assert_abs_diff_eq!(
                s_ell_closed_form(q, 4),
                (1.0 + 4.0 * q + q * q) / (1.0 - q).powi(4),
                epsilon = 1e-7
            );
        }
    }

    #[test]
    fn summed_matches_closed_form_on_grid() {
        for i in 1..10 {
            let q = i as f64 / 10.0;
            for ell in 1..=3 {
                let summed = s_ell(q, ell as f64, 1e-14).unwrap();
                let closed = s_ell_closed_form(q, ell);
                assert!((summed - closed).abs() <= 1e-10 * closed.max(1.0), "q={q} l={ell}");
            }
        }
    }

    #[test]
    fn non_integer_order_between_neighbours() {
        let q = 0.6;
        let a = s_ell(q, 1.0, 1e-13).unwrap();
        let mid = s_ell(q, 1.5, 1e-13).unwrap();
        let b = s_ell(q, 2.0, 1e-13).unwrap();
        assert!(a < mid && mid < b);
    }

    #[test]
    fn edge_cases() {
        assert_eq!(s_ell(0.0, 3.0, 1e-12).unwrap(), 1.0);
        assert!(matches!(s_ell(1.0, 1.0, 1e-12), Err(Error::SeriesDivergent { .. })));
        assert!(matches!(s_ell(0.5, 0.5, 1e-12), Err(Error::Domain(_))));
    }
}
