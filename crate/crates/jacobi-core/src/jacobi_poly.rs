//! Classical one-dimensional Jacobi polynomials `P_n^{(alpha, beta)}` on
//! `[-1, 1]` (orthogonal w.r.t. `(1 - x)^alpha (1 + x)^beta`, Szego
//! normalization): evaluation by the three-term recurrence and ordered zeros
//! by the symmetric-eigenvalue method with a safeguarded Newton polish.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiParams {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl JacobiParams {
    pub fn new(n: usize, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > -1.0) || !(beta > -1.0) {
            return Err(Error::constraint(
                "jacobi_exponents",
                format!("alpha = {alpha}, beta = {beta} must both exceed -1"),
            ));
        }
        Ok(JacobiParams { n, alpha, beta })
    }
}

/// Value of `P_n^{(alpha, beta)}(x)` by the three-term recurrence.
///
/// Overflows for very large degree/parameters; the zero finder uses the
/// scaled variant below instead.
pub fn eval_jacobi(jp: &JacobiParams, x: f64) -> f64 {
    let (a, b) = (jp.alpha, jp.beta);
    if jp.n == 0 {
        return 1.0;
    }
    let mut pkm1 = 1.0;
    let mut pk = 0.5 * (a + b + 2.0) * x + 0.5 * (a - b);
    for k in 2..=jp.n {
        let (ak, bk, ck) = recurrence_abc(k, a, b);
        let next = (ak * x + bk) * pk - ck * pkm1;
        pkm1 = pk;
        pk = next;
    }
    pk
}

/// Coefficients of `P_k = (A_k x + B_k) P_{k-1} - C_k P_{k-2}` for `k >= 2`.
fn recurrence_abc(k: usize, a: f64, b: f64) -> (f64, f64, f64) {
    let k = k as f64;
    let s = 2.0 * k + a + b;
    let denom = 2.0 * k * (k + a + b) * (s - 2.0);
    let ak = (s - 1.0) * s * (s - 2.0) / denom;
    let bk = (s - 1.0) * (a * a - b * b) / denom;
    let ck = 2.0 * (k + a - 1.0) * (k + b - 1.0) * s / denom;
    (ak, bk, ck)
}

/// `P_n(x)` and `P_n'(x)` carried with a common power-of-two exponent so the
/// recurrence survives huge parameters; also tracks the largest intermediate
/// magnitude for relative residuals.
struct ScaledEval {
    value: f64,
    derivative: f64,
    exp2: i64,
    log2_max: f64,
}

fn eval_scaled(n: usize, a: f64, b: f64, x: f64) -> ScaledEval {
    if n == 0 {
        return ScaledEval {
            value: 1.0,
            derivative: 0.0,
            exp2: 0,
            log2_max: 0.0,
        };
    }
    let mut pkm1 = 1.0f64;
    let mut dkm1 = 0.0f64;
    let mut pk = 0.5 * (a + b + 2.0) * x + 0.5 * (a - b);
    let mut dk = 0.5 * (a + b + 2.0);
    let mut exp2: i64 = 0;
    let mut log2_max = pk.abs().max(1.0).log2();
    for k in 2..=n {
        let (ak, bk, ck) = recurrence_abc(k, a, b);
        let lin = ak * x + bk;
        let next = lin * pk - ck * pkm1;
        let dnext = lin * dk + ak * pk - ck * dkm1;
        pkm1 = pk;
        dkm1 = dk;
        pk = next;
        dk = dnext;
        let mag = pk.abs().max(pkm1.abs()).max(dk.abs());
        if mag > 1e200 {
            let f = 2.0f64.powi(-680);
            pk *= f;
            pkm1 *= f;
            dk *= f;
            dkm1 *= f;
            exp2 += 680;
        } else if mag > 0.0 && mag < 1e-200 {
            let f = 2.0f64.powi(680);
            pk *= f;
            pkm1 *= f;
            dk *= f;
            dkm1 *= f;
            exp2 -= 680;
        }
        let current = pk.abs().log2() + exp2 as f64;
        if current.is_finite() && current > log2_max {
            log2_max = current;
        }
    }
    ScaledEval {
        value: pk,
        derivative: dk,
        exp2,
        log2_max,
    }
}

/// `|P_n(x)|` relative to the largest intermediate recurrence magnitude.
pub fn relative_residual(jp: &JacobiParams, x: f64) -> f64 {
    let ev = eval_scaled(jp.n, jp.alpha, jp.beta, x);
    let log2_val = ev.value.abs().log2() + ev.exp2 as f64;
    2.0f64.powf(log2_val - ev.log2_max)
}

/// Ordered zeros of `P_n^{(alpha, beta)}` in `(-1, 1)`.
///
/// Eigenvalues of the symmetric tridiagonal recurrence matrix, then at most
/// five Newton steps per zero with bisection fallback inside the brackets
/// formed by neighboring estimates.
pub fn jacobi_zeros(jp: &JacobiParams) -> Result<Vec<f64>> {
    let n = jp.n;
    if n == 0 {
        return Err(Error::Domain("degree must be >= 1 for zeros".into()));
    }
    let (a, b) = (jp.alpha, jp.beta);
    if n == 1 {
        return Ok(vec![(b - a) / (a + b + 2.0)]);
    }

    // Monic recurrence coefficients (diagonal alpha_k, off-diagonal sqrt(beta_k)).
    let mut diag = vec![0.0f64; n];
    let mut off = vec![0.0f64; n - 1];
    diag[0] = (b - a) / (a + b + 2.0);
    for (k, d) in diag.iter_mut().enumerate().skip(1) {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        *d = (b * b - a * a) / (s * (s + 2.0));
    }
    // beta_1 with the (1 + a + b) factor cancelled to stay valid near a + b = -1.
    off[0] = (4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + a + b).powi(2) * (3.0 + a + b))).sqrt();
    for (k, o) in off.iter_mut().enumerate().skip(1) {
        let kf = (k + 1) as f64;
        let s = 2.0 * kf + a + b;
        let beta_k =
            4.0 * kf * (kf + a) * (kf + b) * (kf + a + b) / (s * s * (s + 1.0) * (s - 1.0));
        *o = beta_k.sqrt();
    }

    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = off[i];
            m[(i + 1, i)] = off[i];
        }
    }
    let eig = m.symmetric_eigenvalues();
    let mut zeros: Vec<f64> = eig.iter().copied().collect();
    zeros.sort_by(f64::total_cmp);

    // Safeguarded Newton polish inside midpoint brackets.
    let polished: Vec<f64> = (0..n)
        .map(|i| {
            let lo = if i == 0 {
                -1.0
            } else {
                0.5 * (zeros[i - 1] + zeros[i])
            };
            let hi = if i == n - 1 {
                1.0
            } else {
                0.5 * (zeros[i] + zeros[i + 1])
            };
            polish_zero(n, a, b, zeros[i], lo, hi)
        })
        .collect();
    Ok(polished)
}

fn polish_zero(n: usize, a: f64, b: f64, start: f64, mut lo: f64, mut hi: f64) -> f64 {
    // (value, derivative, log2 of the scaled residual) at x
    let eval = |x: f64| {
        let e = eval_scaled(n, a, b, x);
        let log2_resid = e.value.abs().log2() + e.exp2 as f64 - e.log2_max;
        (e.value, e.derivative, log2_resid)
    };
    let slo = eval(lo).0.signum();
    let shi = eval(hi).0.signum();
    let bracket_ok = slo != shi && slo != 0.0 && shi != 0.0;
    let mut z = start;
    let (mut v, mut d, mut best_log) = eval(z);
    let mut best_z = z;
    for _ in 0..5 {
        if v == 0.0 {
            return z;
        }
        let step = v / d;
        let mut next = z - step;
        if !next.is_finite() || next < lo || next > hi {
            if !bracket_ok {
                break;
            }
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() <= f64::EPSILON * (1.0 + z.abs()) {
            break;
        }
        let (nv, nd, nlog) = eval(next);
        if bracket_ok && nv != 0.0 {
            if nv.signum() == slo {
                lo = next;
            } else {
                hi = next;
            }
        }
        z = next;
        v = nv;
        d = nd;
        if nv == 0.0 {
            return next;
        }
        if nlog < best_log {
            best_log = nlog;
            best_z = next;
        }
    }
    best_z
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Finite hypergeometric series for `P_n^{(a,b)}`, independent of the
    /// recurrence path:
    /// `P_n = binom(n+a, n) * sum_k (-n)_k (n+a+b+1)_k / ((a+1)_k k!) ((1-x)/2)^k`.
    fn series_oracle(n: usize, a: f64, b: f64, x: f64) -> f64 {
        let mut binom = 1.0;
        for j in 1..=n {
            binom *= (a + j as f64) / j as f64;
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        let z = 0.5 * (1.0 - x);
        for k in 0..n {
            let kf = k as f64;
            term *= (-(n as f64) + kf) * (n as f64 + a + b + 1.0 + kf)
                / ((a + 1.0 + kf) * (kf + 1.0))
                * z;
            sum += term;
        }
        binom * sum
    }

    #[test]
    fn degree_zero_is_one() {
        let jp = JacobiParams::new(0, 2.3, -0.5).unwrap();
        assert_eq!(eval_jacobi(&jp, 0.77), 1.0);
    }

    #[test]
    fn degree_one_symmetric_vanishes_at_zero() {
        let jp = JacobiParams::new(1, 1.7, 1.7).unwrap();
        assert_eq!(eval_jacobi(&jp, 0.0), 0.0);
    }

    #[test]
    fn eval_matches_series_oracle() {
        // frozen from the series: P_3^{(0.5, 1.5)}(0.3) = -0.39725
        let jp = JacobiParams::new(3, 0.5, 1.5).unwrap();
        let v = eval_jacobi(&jp, 0.3);
        assert!((v - (-0.39725)).abs() < 1e-13, "{v}");
        // points chosen so the alternating series keeps mild cancellation,
        // keeping the f64 oracle itself accurate
        for &(n, a, b, x) in &[
            (3usize, 0.5, 1.5, 0.3),
            (5, 2.0, 0.0, -0.4),
            (8, 0.25, 3.0, 0.9),
            (6, 1.0, 2.0, 0.7),
            (10, 3.0, 0.5, 0.85),
        ] {
            let jp = JacobiParams::new(n, a, b).unwrap();
            let v = eval_jacobi(&jp, x);
            let o = series_oracle(n, a, b, x);
            assert!(
                (v - o).abs() <= 1e-11 * (1.0 + o.abs()),
                "n={n} a={a} b={b} x={x}: {v} vs {o}"
            );
        }
    }

    #[test]
    fn zeros_degree_one_is_linear_root() {
        let jp = JacobiParams::new(1, 2.0, 0.5).unwrap();
        let z = jacobi_zeros(&jp).unwrap();
        assert!((z[0] - (0.5 - 2.0) / (2.0 + 0.5 + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn zeros_degree_two_symmetric() {
        // alpha = beta: zeros at +/- 1/sqrt(2 alpha + 3)
        for &alpha in &[0.0, 1.0, 3.0, 7.5] {
            let jp = JacobiParams::new(2, alpha, alpha).unwrap();
            let z = jacobi_zeros(&jp).unwrap();
            let expect = 1.0 / (2.0 * alpha + 3.0f64).sqrt();
            assert!((z[0] + expect).abs() < 1e-13, "{z:?}");
            assert!((z[1] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn zeros_degree_five_symmetric_and_bracketed_by_sign_changes() {
        let jp = JacobiParams::new(5, 5.0, 5.0).unwrap();
        let z = jacobi_zeros(&jp).unwrap();
        assert_eq!(z.len(), 5);
        assert!(z[2].abs() < 1e-13);
        for i in 0..5 {
            assert!((z[i] + z[4 - i]).abs() < 1e-12);
        }
        // validate against sign changes of the evaluation on a fine grid
        // (grid offset so no sample lands exactly on a zero)
        let mut brackets = Vec::new();
        let mut xprev = -0.9991;
        let mut prev = eval_jacobi(&jp, xprev);
        let steps = 3989;
        for k in 1..=steps {
            let x = -0.9991 + 1.9982 * k as f64 / steps as f64;
            let v = eval_jacobi(&jp, x);
            if prev.signum() != v.signum() {
                brackets.push((xprev, x));
            }
            prev = v;
            xprev = x;
        }
        assert_eq!(brackets.len(), 5);
        for (i, (lo, hi)) in brackets.iter().enumerate() {
            assert!(z[i] > *lo && z[i] < *hi, "zero {i} outside bracket");
        }
    }

    #[test]
    fn zeros_interlace_previous_degree() {
        for &(a, b) in &[(0.0, 0.0), (1.5, 0.25), (6.0, 2.0), (-0.5, 4.0)] {
            for n in 2..=12usize {
                let z = jacobi_zeros(&JacobiParams::new(n, a, b).unwrap()).unwrap();
                let w = jacobi_zeros(&JacobiParams::new(n - 1, a, b).unwrap()).unwrap();
                for i in 0..n - 1 {
                    assert!(
                        z[i] < w[i] && w[i] < z[i + 1],
                        "interlacing failed n={n} a={a} b={b}"
                    );
                }
            }
        }
    }

    #[test]
    fn zeros_have_small_relative_residual() {
        for &(n, a, b) in &[(10usize, 2.0, 5.0), (20, 10.0, 5.0), (15, 0.0, 0.0)] {
            let jp = JacobiParams::new(n, a, b).unwrap();
            for z in jacobi_zeros(&jp).unwrap() {
                assert!(z > -1.0 && z < 1.0);
                let r = relative_residual(&jp, z);
                assert!(r < 1e-12, "residual {r:.3e} at n={n} a={a} b={b}");
            }
        }
    }

    #[test]
    fn zeros_survive_huge_parameters() {
        // parameters of the magnitude the zero-limit experiments use
        let n = 50;
        let jp = JacobiParams::new(n, 50.0 * 50.0 - 50.0, 2.0 * 50.0 - 50.0).unwrap();
        let z = jacobi_zeros(&jp).unwrap();
        assert!(z.windows(2).all(|w| w[0] < w[1]));
        assert!(z[0] > -1.0 && z[n - 1] < 1.0);
        for &zi in &z {
            assert!(relative_residual(&jp, zi) < 1e-11);
        }
    }
}
