//! First-order Marcum Q function.
//!
//! `Q1(a, b) = P(R > b)` for a Rice variable `R` with non-centrality `a` and
//! unit per-quadrature variance, equivalently the upper tail of a noncentral
//! chi-squared law with two degrees of freedom evaluated at `b²`.
//!
//! Evaluation uses the Poisson-mixture identity
//! `Q1(a, b) = P(N2 <= N1)` with independent `N1 ~ Poisson(a²/2)` and
//! `N2 ~ Poisson(b²/2)`, summed in the log domain so that far tails do not
//! underflow before they are combined.

/// Computes `Q1(a, b)` for `a, b >= 0`.
pub fn marcum_q1(a: f64, b: f64) -> f64 {
    debug_assert!(a >= 0.0 && b >= 0.0);
    if b <= 0.0 {
        return 1.0;
    }
    let lam1 = 0.5 * a * a;
    let lam2 = 0.5 * b * b;
    if lam1 == 0.0 {
        return (-lam2).exp();
    }

    let ln_lam1 = lam1.ln();
    let ln_lam2 = lam2.ln();
    // The summand behaves like (lam1 * lam2)^j / (j!)^2 once j passes the
    // Poisson mode of N1, so the effective support extends to the larger of
    // the two scales.
    let scale = lam1.max((lam1 * lam2).sqrt());
    let j_max = (scale + 15.0 * scale.sqrt() + 50.0).ceil() as u64;

    let mut ln_w1 = -lam1; // ln P(N1 = j)
    let mut ln_t2 = 0.0; // ln (lam2^j / j!)
    let mut ln_s2 = 0.0; // ln sum_{m <= j} lam2^m / m!
    let mut sum = 0.0;
    for j in 0..=j_max {
        if j > 0 {
            let ln_j = (j as f64).ln();
            ln_w1 += ln_lam1 - ln_j;
            ln_t2 += ln_lam2 - ln_j;
            ln_s2 = log_add_exp(ln_s2, ln_t2);
        }
        let ln_cdf2 = (ln_s2 - lam2).min(0.0);
        let term = (ln_w1 + ln_cdf2).exp();
        sum += term;
        if j as f64 > scale && term <= sum * 1e-18 {
            break;
        }
    }
    sum.min(1.0)
}

fn log_add_exp(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rice tail by Simpson quadrature of the density, unit quadrature variance.
    fn rice_tail_quadrature(a: f64, b: f64) -> f64 {
        fn bessel_i0(x: f64) -> f64 {
            let q = 0.25 * x * x;
            let mut term = 1.0;
            let mut sum = 1.0;
            for k in 1..500 {
                term *= q / (k as f64 * k as f64);
                sum += term;
                if term < sum * 1e-17 {
                    break;
                }
            }
            sum
        }
        let n = 20_000;
        let h = b / n as f64;
        let pdf = |r: f64| r * (-(r * r + a * a) / 2.0).exp() * bessel_i0(r * a);
        let mut acc = pdf(0.0) + pdf(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * pdf(i as f64 * h);
        }
        1.0 - acc * h / 3.0
    }

    #[test]
    fn central_case_is_rayleigh_tail() {
        for b in [0.1f64, 1.0, 2.0, 5.0] {
            let want = (-b * b / 2.0).exp();
            assert!((marcum_q1(0.0, b) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_density_quadrature() {
        for &(a, b) in &[(0.5, 1.0), (1.0, 1.0), (2.0, 1.5), (3.0, 4.0), (4.0, 2.0), (1.0, 5.0)] {
            let got = marcum_q1(a, b);
            let want = rice_tail_quadrature(a, b);
            assert!((got - want).abs() < 1e-9, "Q1({a},{b}) = {got}, quadrature {want}");
        }
    }

    #[test]
    fn far_tail_stays_positive() {
        let q = marcum_q1(1.0, 30.0);
        assert!(q > 0.0 && q < 1e-150);
        assert!(marcum_q1(40.0, 1.0) > 1.0 - 1e-12);
    }

    #[test]
    fn monotone_in_both_arguments() {
        let mut prev = 0.0;
        for i in 0..50 {
            let q = marcum_q1(i as f64 * 0.2, 3.0);
            assert!(q >= prev);
            prev = q;
        }
        let mut prev = 1.0;
        for i in 0..50 {
            let q = marcum_q1(2.0, i as f64 * 0.2);
            assert!(q <= prev);
            prev = q;
        }
    }
}
