//! Standard normal quantile.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// Acklam's rational approximation, relative error ~1.15e-9 before refinement.
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

fn acklam(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -acklam(1.0 - p)
    }
}

/// `z` with `Phi(z) = p`: rational approximation followed by one Halley step.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain { what: "probability", value: p, lo: 0.0, hi: 1.0 });
    }
    if p > 0.5 {
        return inverse_normal_cdf(1.0 - p).map(|z| -z);
    }
    let x = acklam(p);
    let e = normal_cdf(x) - p;
    let u = e / normal_pdf(x);
    Ok(x - u / (1.0 + 0.5 * x * u))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Phi by its Taylor series around 0 (|z| < 3) or the Laplace continued fraction.
    fn phi_oracle(z: f64) -> f64 {
        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if z.abs() < 3.0 {
            // Phi(z) = 1/2 + pdf(z) * sum z^(2n+1) / (1*3*...*(2n+1))
            let mut term = z;
            let mut sum = z;
            for n in 1..200 {
                term *= z * z / (2 * n + 1) as f64;
                sum += term;
            }
            0.5 + pdf * sum
        } else {
            let x = z.abs();
            let mut cf = x;
            for n in (1..200).rev() {
                cf = x + n as f64 / cf;
            }
            let tail = pdf / cf;
            if z > 0.0 { 1.0 - tail } else { tail }
        }
    }

    fn bisect(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi_oracle(mid) < p { lo = mid } else { hi = mid }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn oracle_is_consistent_with_cdf() {
        for &z in &[-5.0, -2.5, -1.0, 0.0, 0.3, 1.96, 2.99, 3.01, 6.0] {
            assert!((phi_oracle(z) - normal_cdf(z)).abs() < 1e-10, "z={z} {} {}", phi_oracle(z), normal_cdf(z));
        }
    }

    #[test]
    fn known_quantiles() {
        assert_eq!(inverse_normal_cdf(0.5).unwrap(), 0.0);
        let z = inverse_normal_cdf(0.975).unwrap();
        let oracle = bisect(0.975);
        assert!((oracle - 1.959964).abs() < 1e-6);
        assert!((z - oracle).abs() < 1e-9, "{z} vs {oracle}");
    }

    #[test]
    fn endpoints_rejected() {
        assert!(inverse_normal_cdf(0.0).is_err());
        assert!(inverse_normal_cdf(1.0).is_err());
        assert!(inverse_normal_cdf(f64::NAN).is_err());
    }

    #[test]
    fn residual_and_symmetry_across_range() {
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let z = inverse_normal_cdf(p).unwrap();
            assert!((normal_cdf(z) - p).abs() <= 1e-9, "p={p} {}", normal_cdf(z) - p);
            assert!((z + inverse_normal_cdf(1.0 - p).unwrap()).abs() < 1e-12);
        }
        for &p in &[1e-12, 1e-8, 1e-5, 0.001, 0.02, 0.02425, 0.03] {
            let z = inverse_normal_cdf(p).unwrap();
            assert!((normal_cdf(z) - p).abs() <= 1e-9 * p.max(1e-3));
            assert!((z - bisect(p)).abs() < 1e-7 * (1.0 + z.abs()));
        }
    }
}
