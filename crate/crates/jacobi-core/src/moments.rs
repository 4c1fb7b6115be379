//! Empirical moments of rescaled configurations, the closed finite-N moment
//! ODE system used as an independent oracle, and the limiting moment
//! recursions of the scaling regimes.
//!
//! Public times of the limit recursions are on the rescaled clock of the
//! regime (`t` of `mu_{N, t/s_N}`); the finite-N oracle runs on the raw
//! process clock so it can be compared against trajectories directly.

use crate::error::{Error, Result};
use crate::freeprob::MomentVector;
use crate::model::{DriftSign, ParticleState, Regime};

/// Moments `m_l = (1/N) sum_i (a (x_i - b))^l` for `l = 0..=order`, with
/// compensated summation per order.
pub fn empirical_moments(x: &ParticleState, a: f64, b: f64, order: usize) -> Result<MomentVector> {
    if !(a > 0.0) {
        return Err(Error::constraint("scale_positive", "a must be > 0"));
    }
    Ok(empirical_moments_raw(x.coords(), a, b, order))
}

pub(crate) fn empirical_moments_raw(coords: &[f64], a: f64, b: f64, order: usize) -> MomentVector {
    let n = coords.len() as f64;
    let mut sums = vec![0.0f64; order + 1];
    let mut comps = vec![0.0f64; order + 1];
    for &xi in coords {
        let y = a * (xi - b);
        let mut p = 1.0;
        for l in 1..=order {
            p *= y;
            // Neumaier update
            let t = sums[l] + p;
            if sums[l].abs() >= p.abs() {
                comps[l] += (sums[l] - t) + p;
            } else {
                comps[l] += (p - t) + sums[l];
            }
            sums[l] = t;
        }
    }
    let mut values = vec![0.0; order + 1];
    values[0] = 1.0;
    for l in 1..=order {
        values[l] = (sums[l] + comps[l]) / n;
    }
    MomentVector::new(values).expect("m_0 = 1 by construction")
}

/// Right-hand side of the closed finite-N moment system for the transformed
/// coordinates `a (x_i - b)`:
///
/// `dS_0 = 0`, `dS_1 = -(p+q) S_1 + a (p - q - b (p+q))`, and for `l >= 2`
///
/// `dS_l = l [ (p - q - b(p+q-2(l-1))) a S_{l-1} - (p+q-(l-1)) S_l
///           - a^2 (1-b^2)(l-1) S_{l-2} + N a^2 (1-b^2) sum S_k S_{l-2-k}
///           - N sum S_{k+1} S_{l-1-k} - 2 a b N sum S_k S_{l-1-k} ]`,
///
/// negated on the noncompact chamber.
pub fn moment_ode_rhs(
    s: &[f64],
    p: f64,
    q: f64,
    a: f64,
    b: f64,
    n: usize,
    sign: DriftSign,
    out: &mut [f64],
) {
    let order = s.len() - 1;
    let nf = n as f64;
    out[0] = 0.0;
    if order >= 1 {
        out[1] = -(p + q) * s[1] + a * (p - q - b * (p + q));
    }
    for l in 2..=order {
        let lf = l as f64;
        let mut conv_low = 0.0; // sum_{k=0}^{l-2} S_k S_{l-2-k}
        let mut conv_shift = 0.0; // sum_{k=0}^{l-2} S_{k+1} S_{l-1-k}
        let mut conv_mid = 0.0; // sum_{k=0}^{l-2} S_k S_{l-1-k}
        for k in 0..=l - 2 {
            conv_low += s[k] * s[l - 2 - k];
            conv_shift += s[k + 1] * s[l - 1 - k];
            conv_mid += s[k] * s[l - 1 - k];
        }
        let one_minus_b2 = 1.0 - b * b;
        out[l] = lf
            * ((p - q - b * (p + q - 2.0 * (lf - 1.0))) * a * s[l - 1]
                - (p + q - (lf - 1.0)) * s[l]
                - a * a * one_minus_b2 * (lf - 1.0) * s[l - 2]
                + nf * a * a * one_minus_b2 * conv_low
                - nf * conv_shift
                - 2.0 * a * b * nf * conv_mid);
    }
    if sign == DriftSign::Noncompact {
        for v in out.iter_mut() {
            *v = -*v;
        }
    }
}

/// Integrates the closed finite-N system from `s0` on the raw clock,
/// returning the moment vector at every grid time (the grid must start at
/// the initial time 0 semantics: values are reported *at* the given times,
/// with `t_grid[0] >= 0`).
pub fn moment_ode_oracle(
    s0: &MomentVector,
    p: f64,
    q: f64,
    a: f64,
    b: f64,
    n: usize,
    sign: DriftSign,
    t_grid: &[f64],
) -> Result<Vec<MomentVector>> {
    let order = s0.order();
    if order < 2 {
        return Err(Error::Domain("oracle needs moment order >= 2".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::Domain(
            "t_grid must be strictly increasing and >= 0".into(),
        ));
    }
    // RK4 with substeps tied to the stiffest linear rate l (p + q).
    let h_max = 0.02 / (1.0 + order as f64 * (p + q));
    let mut s: Vec<f64> = s0.values().to_vec();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    let mut k1 = vec![0.0; order + 1];
    let mut k2 = vec![0.0; order + 1];
    let mut k3 = vec![0.0; order + 1];
    let mut k4 = vec![0.0; order + 1];
    let mut tmp = vec![0.0; order + 1];
    for &target in t_grid {
        while t < target {
            let h = h_max.min(target - t);
            moment_ode_rhs(&s, p, q, a, b, n, sign, &mut k1);
            for i in 0..=order {
                tmp[i] = s[i] + 0.5 * h * k1[i];
            }
            moment_ode_rhs(&tmp, p, q, a, b, n, sign, &mut k2);
            for i in 0..=order {
                tmp[i] = s[i] + 0.5 * h * k2[i];
            }
            moment_ode_rhs(&tmp, p, q, a, b, n, sign, &mut k3);
            for i in 0..=order {
                tmp[i] = s[i] + h * k3[i];
            }
            moment_ode_rhs(&tmp, p, q, a, b, n, sign, &mut k4);
            for i in 0..=order {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
        }
        out.push(MomentVector::new(s.clone())?);
    }
    Ok(out)
}

/// Right-hand side for the mean moments of the *stochastic* finite-N system
/// on the rescaled clock, with the Ito corrections carried by
/// `eta = 2/kappa - 1` (mean-field closure: moment products are replaced by
/// products of means, exact up to replica covariances):
///
/// `dS_l = -l (1 + (l-1) eta / (p+q)) S_l
///        + l a ((p-q)/(p+q) - b (1 + 2 (l-1) eta/(p+q))) S_{l-1}
///        + l a^2 (1-b^2) (l-1) eta/(p+q) S_{l-2}
///        + l N a^2 (1-b^2)/(p+q) sum S_k S_{l-2-k}
///        - l N/(p+q) sum S_{k+1} S_{l-1-k} - 2 l a b N/(p+q) sum S_k S_{l-1-k}`,
///
/// negated on the noncompact chamber. At `eta = -1` (frozen limit) this is
/// the rescaled deterministic system; at `kappa = 2` the corrections vanish.
#[allow(clippy::too_many_arguments)]
pub fn stochastic_mean_rhs(
    s: &[f64],
    p: f64,
    q: f64,
    a: f64,
    b: f64,
    n: usize,
    kappa: f64,
    sign: DriftSign,
    out: &mut [f64],
) {
    let order = s.len() - 1;
    let nf = n as f64;
    let eta = 2.0 / kappa - 1.0;
    let spq = p + q;
    out[0] = 0.0;
    if order >= 1 {
        out[1] = -s[1] + a * ((p - q) / spq - b);
    }
    for l in 2..=order {
        let lf = l as f64;
        let mut conv_low = 0.0;
        let mut conv_shift = 0.0;
        let mut conv_mid = 0.0;
        for k in 0..=l - 2 {
            conv_low += s[k] * s[l - 2 - k];
            conv_shift += s[k + 1] * s[l - 1 - k];
            conv_mid += s[k] * s[l - 1 - k];
        }
        let one_minus_b2 = 1.0 - b * b;
        out[l] = -lf * (1.0 + (lf - 1.0) * eta / spq) * s[l]
            + lf * a * ((p - q) / spq - b * (1.0 + 2.0 * (lf - 1.0) * eta / spq)) * s[l - 1]
            + lf * a * a * one_minus_b2 * (lf - 1.0) * eta / spq * s[l - 2]
            + lf * nf * a * a * one_minus_b2 / spq * conv_low
            - lf * nf / spq * conv_shift
            - 2.0 * lf * a * b * nf / spq * conv_mid;
    }
    if sign == DriftSign::Noncompact {
        for v in out.iter_mut() {
            *v = -*v;
        }
    }
}

/// Integrates the stochastic mean-moment system on the rescaled clock.
#[allow(clippy::too_many_arguments)]
pub fn stochastic_mean_oracle(
    s0: &MomentVector,
    p: f64,
    q: f64,
    a: f64,
    b: f64,
    n: usize,
    kappa: f64,
    sign: DriftSign,
    t_grid: &[f64],
) -> Result<Vec<MomentVector>> {
    let order = s0.order();
    if t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::Domain(
            "t_grid must be strictly increasing and >= 0".into(),
        ));
    }
    let h_max = 2e-4f64;
    let mut s: Vec<f64> = s0.values().to_vec();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    let mut k1 = vec![0.0; order + 1];
    let mut k2 = vec![0.0; order + 1];
    let mut k3 = vec![0.0; order + 1];
    let mut k4 = vec![0.0; order + 1];
    let mut tmp = vec![0.0; order + 1];
    for &target in t_grid {
        while t < target {
            let h = h_max.min(target - t);
            stochastic_mean_rhs(&s, p, q, a, b, n, kappa, sign, &mut k1);
            for i in 0..=order {
                tmp[i] = s[i] + 0.5 * h * k1[i];
            }
            stochastic_mean_rhs(&tmp, p, q, a, b, n, kappa, sign, &mut k2);
            for i in 0..=order {
                tmp[i] = s[i] + 0.5 * h * k2[i];
            }
            stochastic_mean_rhs(&tmp, p, q, a, b, n, kappa, sign, &mut k3);
            for i in 0..=order {
                tmp[i] = s[i] + h * k3[i];
            }
            stochastic_mean_rhs(&tmp, p, q, a, b, n, kappa, sign, &mut k4);
            for i in 0..=order {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
        }
        out.push(MomentVector::new(s.clone())?);
    }
    Ok(out)
}

/// Right-hand side of the limiting (N -> infinity) moment recursion of a
/// regime on its rescaled clock.
fn limit_rhs(regime: &Regime, s: &[f64], out: &mut [f64]) -> Result<()> {
    let order = s.len() - 1;
    out[0] = 0.0;
    let conv_low = |s: &[f64], l: usize| -> f64 { (0..=l - 2).map(|k| s[k] * s[l - 2 - k]).sum() };
    let conv_mid = |s: &[f64], l: usize| -> f64 { (0..=l - 2).map(|k| s[k] * s[l - 1 - k]).sum() };
    match *regime {
        Regime::WignerStationary { c } => {
            let coef = 4.0 * (1.0 + c).powi(-3);
            for l in 1..=order {
                let lf = l as f64;
                let quad = if l >= 2 { coef * conv_low(s, l) } else { 0.0 };
                out[l] = -lf * s[l] + lf * quad;
            }
        }
        Regime::WignerDegenerate => {
            for l in 1..=order {
                out[l] = -(l as f64) * s[l];
            }
        }
        Regime::WignerLocal { b } => {
            let coef = 1.0 - b * b;
            out[1] = 0.0;
            for l in 2..=order {
                out[l] = l as f64 * coef * conv_low(s, l);
            }
        }
        Regime::WignerLocalDrift { b, c } => {
            let coef = 1.0 - b * b;
            for l in 1..=order {
                let lf = l as f64;
                let quad = if l >= 2 { coef * conv_low(s, l) } else { 0.0 };
                out[l] = lf * c * s[l - 1] + lf * quad;
            }
        }
        Regime::MpStationary { p_hat } => {
            out[1] = -s[1] + 2.0 * p_hat;
            for l in 2..=order {
                let lf = l as f64;
                out[l] = -lf * s[l] + 2.0 * lf * (p_hat * s[l - 1] + conv_mid(s, l));
            }
        }
        Regime::MpLocal { p_hat } => {
            out[1] = 2.0 * p_hat;
            for l in 2..=order {
                let lf = l as f64;
                out[l] = 2.0 * lf * (p_hat * s[l - 1] + conv_mid(s, l));
            }
        }
        Regime::NcWignerLocal { b } => {
            let coef = b * b - 1.0;
            out[1] = 0.0;
            for l in 2..=order {
                out[l] = l as f64 * coef * conv_low(s, l);
            }
        }
        Regime::NcMpTimeInverted { q_hat } => {
            out[1] = s[1] + 2.0 * q_hat;
            for l in 2..=order {
                let lf = l as f64;
                out[l] = lf * s[l] + 2.0 * lf * (q_hat * s[l - 1] + conv_mid(s, l));
            }
        }
        Regime::NcMpLocal { q_hat } => {
            out[1] = 2.0 * q_hat;
            for l in 2..=order {
                let lf = l as f64;
                out[l] = 2.0 * lf * (q_hat * s[l - 1] + conv_mid(s, l));
            }
        }
        Regime::KestenMcKay | Regime::Wachter => {
            return Err(Error::NotImplemented(
                "Kesten-McKay and Wachter moment recursions are out of scope".into(),
            ));
        }
    }
    Ok(())
}

/// Integrates the limiting moment recursion of `regime` from `mu0`,
/// reporting the moments at each (strictly increasing, rescaled) time.
///
/// The recursion is triangular, so truncation at any order is closed.
pub fn limit_recursion(
    regime: &Regime,
    mu0: &MomentVector,
    t_list: &[f64],
    dt: f64,
) -> Result<Vec<MomentVector>> {
    let order = mu0.order();
    if t_list.windows(2).any(|w| w[1] <= w[0]) || t_list.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::Domain(
            "t_list must be strictly increasing and >= 0".into(),
        ));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain("dt must be > 0".into()));
    }
    let mut s: Vec<f64> = mu0.values().to_vec();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_list.len());
    let mut k1 = vec![0.0; order + 1];
    let mut k2 = vec![0.0; order + 1];
    let mut k3 = vec![0.0; order + 1];
    let mut k4 = vec![0.0; order + 1];
    let mut tmp = vec![0.0; order + 1];
    for &target in t_list {
        if target == 0.0 {
            out.push(mu0.clone());
            continue;
        }
        while t < target {
            let h = dt.min(target - t);
            limit_rhs(regime, &s, &mut k1)?;
            for i in 0..=order {
                tmp[i] = s[i] + 0.5 * h * k1[i];
            }
            limit_rhs(regime, &tmp, &mut k2)?;
            for i in 0..=order {
                tmp[i] = s[i] + 0.5 * h * k2[i];
            }
            limit_rhs(regime, &tmp, &mut k3)?;
            for i in 0..=order {
                tmp[i] = s[i] + h * k3[i];
            }
            limit_rhs(regime, &tmp, &mut k4)?;
            for i in 0..=order {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
        }
        out.push(MomentVector::new(s.clone())?);
    }
    Ok(out)
}

/// Moment growth bound `|m_l| <= (gamma l)^l` for `1 <= l <= L` (the
/// sufficient condition used for moment determinacy).
pub fn growth_bound_check(m: &MomentVector, gamma: f64) -> Result<bool> {
    if !(gamma > 0.0) {
        return Err(Error::constraint("gamma_positive", "gamma must be > 0"));
    }
    for l in 1..=m.order() {
        let bound = (gamma * l as f64).powi(l as i32);
        if m.get(l).abs() > bound {
            return Ok(false);
        }
    }
    Ok(true)
}
