//! Special functions behind the significance tests.

use std::f64::consts::PI;

use statrs::function::beta::beta_reg;

/// Two-sided Student-t tail probability `P(|T| ≥ |t|)` with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Kolmogorov distribution survival function `Q(λ) = P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form converges fast for small λ
        let y = -PI * PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for j in 1..=20 {
            let k = (2 * j - 1) as f64;
            s += (k * k * y).exp();
        }
        (1.0 - (2.0 * PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let j = j as f64;
            let term = (-2.0 * j * j * lambda * lambda).exp();
            s += sign * term;
            if term < 1e-18 {
                break;
            }
            sign = -sign;
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn t_tail_single_df_is_cauchy() {
        // df = 1: P(|T| ≥ t) = 1 - 2 atan(t) / π
        for t in [0.1, 1.0, 3.0, 40.0] {
            let expect = 1.0 - 2.0 * f64::atan(t) / PI;
            assert_abs_diff_eq!(student_t_two_sided(t, 1.0), expect, epsilon = 1e-13);
        }
    }

    #[test]
    fn kolmogorov_branches_agree_at_the_switch() {
        let lo = {
            let y = -PI * PI / (8.0 * 1.18 * 1.18);
            1.0 - (2.0 * PI).sqrt() / 1.18 * (1..=20).map(|j| (((2 * j - 1) as f64).powi(2) * y).exp()).sum::<f64>()
        };
        assert_abs_diff_eq!(kolmogorov_sf(1.18), lo, epsilon = 1e-12);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert!(kolmogorov_sf(3.0) < 1e-6);
    }
}
