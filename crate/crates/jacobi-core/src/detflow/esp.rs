//! Elementary symmetric polynomials of the particle configuration: forward
//! map, closed-form linear trajectories, and inversion back to ordered
//! coordinates via balanced companion-matrix eigenvalues.
//!
//! Under both drift fields the vector `e = (e_1, ..., e_N)` satisfies a
//! lower-triangular linear ODE; this holds in any affine frame
//! `y = (x - center)/scale`, which is what makes boundary starts tractable
//! numerically at large N.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::exppoly::ExpPolySum;
use crate::error::{Error, Result};
use crate::model::DriftSign;

/// Default relative tolerance on imaginary parts when inverting.
pub const ROOT_IMAG_TOL: f64 = 1e-8;

/// `(e_1(x), ..., e_N(x))` by Horner-style accumulation of
/// `prod_i (z - x_i)`.
pub fn esp_forward(coords: &[f64]) -> Vec<f64> {
    let n = coords.len();
    // c[j] holds the coefficient of z^{n-j} as factors are multiplied in;
    // e_k = (-1)^k c_k is fixed up at the end.
    let mut c = vec![0.0f64; n + 1];
    c[0] = 1.0;
    for (m, &x) in coords.iter().enumerate() {
        for j in (1..=m + 1).rev() {
            c[j] -= x * c[j - 1];
        }
    }
    (1..=n)
        .map(|k| if k % 2 == 0 { c[k] } else { -c[k] })
        .collect()
}

/// Monic coefficients `z^n + a_{n-1} z^{n-1} + ... + a_0` from the ESP
/// vector: `a_{n-k} = (-1)^k e_k`.
pub fn monic_from_esp(e: &[f64]) -> Vec<f64> {
    let n = e.len();
    let mut a = vec![0.0f64; n];
    for (k, &ek) in e.iter().enumerate() {
        let sign = if (k + 1) % 2 == 0 { 1.0 } else { -1.0 };
        a[n - (k + 1)] = sign * ek;
    }
    a
}

/// Coefficients of the lower-triangular linear system
/// `d e_k / dt = rate_k e_k + beta_k e_{k-1} + gamma_k e_{k-2}`
/// in the affine frame `y = (x - center)/scale` (`e_0 = 1`).
#[derive(Debug, Clone)]
pub struct EspLinearSystem {
    pub rate: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl EspLinearSystem {
    pub fn new(n: usize, p: f64, q: f64, sign: DriftSign, center: f64, scale: f64) -> Self {
        let nf = n as f64;
        let mut rate = vec![0.0; n + 1];
        let mut beta = vec![0.0; n + 1];
        let mut gamma = vec![0.0; n + 1];
        let (b, a) = (center, scale);
        for k in 1..=n {
            let kf = k as f64;
            let mut r = kf * (kf - 1.0) - kf * (p + q);
            let mut be = (nf - kf + 1.0) * ((p - q) - b * (p + q - 2.0 * (kf - 1.0))) / a;
            let mut ga = -(1.0 - b * b) * (nf - kf + 2.0) * (nf - kf + 1.0) / (a * a);
            if sign == DriftSign::Noncompact {
                r = -r;
                be = -be;
                ga = -ga;
            }
            rate[k] = r;
            beta[k] = be;
            gamma[k] = ga;
        }
        EspLinearSystem { rate, beta, gamma }
    }

    fn rhs(&self, e: &[f64], out: &mut [f64]) {
        let n = e.len() - 1;
        out[0] = 0.0;
        for k in 1..=n {
            let low2 = if k >= 2 { e[k - 2] } else { 0.0 };
            out[k] = self.rate[k] * e[k] + self.beta[k] * e[k - 1] + self.gamma[k] * low2;
        }
    }

    /// Power-series propagation from `t = 0`: the Taylor coefficients obey
    /// `(m+1) c_{k,m+1} = rate_k c_{k,m} + beta_k c_{k-1,m} + gamma_k c_{k-2,m}`.
    ///
    /// Exact up to truncation, with no step-size artifacts; intended for the
    /// short bootstrap horizons where `|rate_max * t|` is small. Degenerate
    /// starts (all coefficients zero) are handled exactly.
    pub fn taylor_eval(&self, e0: &[f64], t_grid: &[f64], terms: usize) -> Vec<Vec<f64>> {
        let n = e0.len();
        // Expand in the normalized time tau = t / t_scale so the stored
        // coefficients stay value-sized even when the frame couplings are
        // huge and the horizon tiny.
        let t_scale = t_grid
            .iter()
            .fold(0.0f64, |m, t| m.max(t.abs()))
            .max(1e-300);
        let mut coeff: Vec<Vec<f64>> = Vec::with_capacity(terms + 1);
        let mut c0 = vec![0.0; n + 1];
        c0[0] = 1.0;
        c0[1..].copy_from_slice(e0);
        coeff.push(c0);
        for m in 0..terms {
            let prev = &coeff[m];
            let mut next = vec![0.0; n + 1];
            for k in 1..=n {
                let low2 = if k >= 2 { prev[k - 2] } else { 0.0 };
                next[k] = t_scale
                    * (self.rate[k] * prev[k] + self.beta[k] * prev[k - 1] + self.gamma[k] * low2)
                    / (m as f64 + 1.0);
            }
            coeff.push(next);
        }
        t_grid
            .iter()
            .map(|&t| {
                let tau = t / t_scale;
                // Horner evaluation from the top coefficient down
                let mut acc = coeff[terms][1..].to_vec();
                for m in (0..terms).rev() {
                    for k in 1..=n {
                        acc[k - 1] = acc[k - 1] * tau + coeff[m][k];
                    }
                }
                acc
            })
            .collect()
    }

    /// Dense RK4 integration of the linear system; cheap and accurate because
    /// the step is tied to the largest rate.
    pub fn integrate(&self, e0: &[f64], t_grid: &[f64]) -> Vec<Vec<f64>> {
        let n = e0.len();
        let max_rate = self
            .rate
            .iter()
            .fold(0.0f64, |acc, r| acc.max(r.abs()))
            .max(1e-12);
        let mut e = vec![0.0; n + 1];
        e[0] = 1.0;
        e[1..].copy_from_slice(e0);
        let mut t = 0.0;
        let mut out = Vec::with_capacity(t_grid.len());
        let mut k1 = vec![0.0; n + 1];
        let mut k2 = vec![0.0; n + 1];
        let mut k3 = vec![0.0; n + 1];
        let mut k4 = vec![0.0; n + 1];
        let mut tmp = vec![0.0; n + 1];
        for &target in t_grid {
            while t < target {
                let h = (0.005 / max_rate).min(target - t);
                self.rhs(&e, &mut k1);
                for i in 0..=n {
                    tmp[i] = e[i] + 0.5 * h * k1[i];
                }
                self.rhs(&tmp, &mut k2);
                for i in 0..=n {
                    tmp[i] = e[i] + 0.5 * h * k2[i];
                }
                self.rhs(&tmp, &mut k3);
                for i in 0..=n {
                    tmp[i] = e[i] + h * k3[i];
                }
                self.rhs(&tmp, &mut k4);
                for i in 0..=n {
                    e[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                t += h;
            }
            out.push(e[1..].to_vec());
        }
        out
    }
}

/// Closed-form ESP trajectory: one exponential-polynomial sum per component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EspTrajectory {
    pub n: usize,
    pub components: Vec<ExpPolySum>,
    pub sign_is_compact: bool,
}

impl EspTrajectory {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(t)).collect()
    }
}

/// Exact symbolic solution of the raw-frame ESP flow from `e0`:
/// `e_1` from the explicit affine formula, each higher component by
/// variation of constants on exponential-polynomial sums.
pub fn esp_closed_form(e0: &[f64], p: f64, q: f64, sign: DriftSign) -> Result<EspTrajectory> {
    let n = e0.len();
    if n == 0 {
        return Err(Error::Domain("need at least one component".into()));
    }
    let sys = EspLinearSystem::new(n, p, q, sign, 0.0, 1.0);
    let mut components: Vec<ExpPolySum> = Vec::with_capacity(n);
    for k in 1..=n {
        let prev = if k >= 2 {
            components[k - 2].clone()
        } else {
            ExpPolySum::constant(1.0) // e_0
        };
        let prev2 = if k >= 3 {
            components[k - 3].clone()
        } else if k == 2 {
            ExpPolySum::constant(1.0) // e_0 feeding gamma_2
        } else {
            ExpPolySum::zero()
        };
        let forcing =
            prev.scaled(sys.beta[k])
                .add(&prev2.scaled(if k >= 2 { sys.gamma[k] } else { 0.0 }));
        components.push(forcing.variation_of_constants(sys.rate[k], e0[k - 1]));
    }
    Ok(EspTrajectory {
        n,
        components,
        sign_is_compact: sign == DriftSign::Compact,
    })
}

/// Sorted real roots of `z^N - e_1 z^{N-1} + e_2 z^{N-2} - ...` via
/// eigenvalues of the balanced companion matrix, polished by Newton.
///
/// Rejects the input when any root keeps an imaginary part above
/// `tol_imag * scale`, where `scale` is the Cauchy-style root bound.
pub fn esp_invert(e: &[f64], tol_imag: f64) -> Result<Vec<f64>> {
    let n = e.len();
    if n == 0 {
        return Err(Error::Domain("empty ESP vector".into()));
    }
    let monic = monic_from_esp(e);
    if monic.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("nonfinite ESP coefficients".into()));
    }
    if n == 1 {
        return Ok(vec![e[0]]);
    }
    let scale = 1.0
        + monic
            .iter()
            .enumerate()
            .map(|(j, &c)| c.abs().powf(1.0 / (n - j) as f64))
            .fold(0.0f64, f64::max);

    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -monic[i];
    }
    balance_in_place(&mut m);
    let schur = nalgebra::linalg::Schur::try_new(m, 1e-14, 100_000)
        .ok_or_else(|| Error::Domain("companion eigenvalue iteration failed".into()))?;
    let eig = schur.complex_eigenvalues();

    let mut max_imag = 0.0f64;
    let mut roots: Vec<f64> = Vec::with_capacity(n);
    for z in eig.iter() {
        max_imag = max_imag.max(z.im.abs());
        roots.push(z.re);
    }
    if max_imag > tol_imag * scale {
        return Err(Error::NotInImage {
            max_imag,
            tol: tol_imag * scale,
        });
    }
    roots.sort_by(f64::total_cmp);
    // Newton polish on the monic polynomial (Horner), keeping order.
    for r in roots.iter_mut() {
        let mut z = *r;
        for _ in 0..4 {
            let (v, d) = horner_monic(&monic, z);
            if d == 0.0 || !v.is_finite() {
                break;
            }
            let step = v / d;
            if !step.is_finite() || step.abs() > 0.5 * scale {
                break;
            }
            z -= step;
            if step.abs() <= 1e-16 * (1.0 + z.abs()) {
                break;
            }
        }
        if z.is_finite() {
            *r = z;
        }
    }
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

/// Monic polynomial value and derivative at `z`.
fn horner_monic(monic: &[f64], z: f64) -> (f64, f64) {
    let mut v = 1.0;
    let mut d = 0.0;
    for &c in monic.iter().rev() {
        d = d * z + v;
        v = v * z + c;
    }
    (v, d)
}

/// EISPACK-style iterative diagonal balancing (powers of two).
fn balance_in_place(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    let radix: f64 = 2.0;
    let sq = radix * radix;
    loop {
        let mut done = true;
        for i in 0..n {
            let mut c: f64 = (0..n).filter(|&j| j != i).map(|j| a[(j, i)].abs()).sum();
            let r: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= sq;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= sq;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let ginv = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= ginv;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}
