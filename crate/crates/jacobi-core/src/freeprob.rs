//! Free-probability measure algebra on truncated moment sequences: free
//! cumulants via the non-crossing-partition recursion, free additive
//! convolution, dilation, the even-square-root and squaring operators, the
//! semicircle and Marchenko-Pastur families, and the per-regime limit-law
//! constructors.
//!
//! Everything is exact on length-L moment vectors; no densities or integral
//! transforms are involved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Regime;

/// Tolerance used for symmetry (odd-moment) checks.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    #[default]
    Unconstrained,
    NonNegative,
}

/// Raw moments `m_0 .. m_L` of a probability measure (`m_0 = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    values: Vec<f64>,
    #[serde(default)]
    support: Support,
}

impl MomentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("moment vector must contain m_0".into()));
        }
        if (values[0] - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "m_0 = {} but a probability measure needs m_0 = 1",
                values[0]
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("moments must be finite".into()));
        }
        let mut values = values;
        values[0] = 1.0;
        Ok(MomentVector {
            values,
            support: Support::Unconstrained,
        })
    }

    /// Tags the vector. `NonNegative` asserts the necessary Hankel condition
    /// `m_2 >= m_1^2` when second moments are present.
    pub fn with_support(mut self, support: Support) -> Result<Self> {
        if support == Support::NonNegative && self.order() >= 2 {
            let m1 = self.values[1];
            let m2 = self.values[2];
            if m2 < m1 * m1 - 1e-9 * (1.0 + m1 * m1) {
                return Err(Error::Domain(format!(
                    "nonnegative-support tag rejected: m_2 = {m2} < m_1^2 = {}",
                    m1 * m1
                )));
            }
        }
        self.support = support;
        Ok(self)
    }

    pub fn dirac(location: f64, order: usize) -> Self {
        let mut values = Vec::with_capacity(order + 1);
        let mut p = 1.0;
        for _ in 0..=order {
            values.push(p);
            p *= location;
        }
        let support = if location >= 0.0 {
            Support::NonNegative
        } else {
            Support::Unconstrained
        };
        MomentVector { values, support }
    }

    /// Highest stored order `L`.
    pub fn order(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn get(&self, l: usize) -> f64 {
        self.values[l]
    }

    /// Restriction to orders `0..=order`.
    pub fn truncated(&self, order: usize) -> Self {
        MomentVector {
            values: self.values[..=order.min(self.order())].to_vec(),
            support: self.support,
        }
    }

    /// Whether all odd moments vanish within the symmetry tolerance (scaled
    /// by the neighboring even moments).
    pub fn is_symmetric(&self, tol: f64) -> bool {
        for l in (1..=self.order()).step_by(2) {
            let lower = self.values[l - 1].abs();
            let upper = if l < self.order() {
                self.values[l + 1].abs()
            } else {
                0.0
            };
            if self.values[l].abs() > tol * (1.0 + lower.max(upper)) {
                return false;
            }
        }
        true
    }

    /// `|m_1| + 2 sqrt(max(0, m_2 - m_1^2))`: a support-scale proxy used to
    /// normalize moment gaps order by order.
    pub fn scale_proxy(&self) -> f64 {
        if self.order() < 2 {
            return self.values.get(1).map_or(0.0, |m| m.abs());
        }
        let m1 = self.values[1];
        let var = (self.values[2] - m1 * m1).max(0.0);
        m1.abs() + 2.0 * var.sqrt()
    }
}

/// `A[k][j] = sum over compositions of j into k nonnegative parts of products
/// of moments`, i.e. the k-fold truncated self-convolution of `m`.
fn composition_table(m: &[f64], order: usize) -> Vec<Vec<f64>> {
    let mut table = vec![vec![0.0; order + 1]; order + 1];
    if order == 0 {
        return table;
    }
    table[1][..(order + 1)].copy_from_slice(&m[..(order + 1)]);
    for k in 2..=order {
        for j in 0..=order {
            let mut acc = 0.0;
            for i in 0..=j {
                acc += table[k - 1][j - i] * m[i];
            }
            table[k][j] = acc;
        }
    }
    table
}

/// Free cumulants `kappa_1 .. kappa_L` (index 0 unused) from moments via
/// `m_n = sum_{k=1}^{n} kappa_k sum_{i_1 + ... + i_k = n - k} m_{i_1} ... m_{i_k}`.
pub fn moments_to_cumulants(m: &MomentVector) -> Vec<f64> {
    let order = m.order();
    let table = composition_table(m.values(), order);
    let mut kappa = vec![0.0; order + 1];
    for n in 1..=order {
        let mut acc = m.values[n];
        for k in 1..n {
            acc -= kappa[k] * table[k][n - k];
        }
        // the kappa_n coefficient is m_0^n = 1
        kappa[n] = acc;
    }
    kappa
}

/// Moments from free cumulants; exact inverse of [`moments_to_cumulants`].
pub fn cumulants_to_moments(kappa: &[f64]) -> Result<MomentVector> {
    if kappa.is_empty() {
        return Err(Error::Domain("cumulant vector must include index 0".into()));
    }
    let order = kappa.len() - 1;
    let mut m = vec![0.0; order + 1];
    m[0] = 1.0;
    for n in 1..=order {
        // rebuild the composition table rows on the moments known so far
        let table = composition_table(&m, n - 1);
        let mut acc = kappa[n];
        for k in 1..n {
            acc += kappa[k] * table[k][n - k];
        }
        m[n] = acc;
    }
    MomentVector::new(m)
}

/// Free additive convolution: cumulant-wise addition.
pub fn free_add(a: &MomentVector, b: &MomentVector) -> Result<MomentVector> {
    if a.order() != b.order() {
        return Err(Error::Domain(format!(
            "free_add needs equal orders, got {} and {}",
            a.order(),
            b.order()
        )));
    }
    let ka = moments_to_cumulants(a);
    let kb = moments_to_cumulants(b);
    let sum: Vec<f64> = ka.iter().zip(&kb).map(|(x, y)| x + y).collect();
    cumulants_to_moments(&sum)
}

/// Image under `x -> v x`: `m_l -> v^l m_l`.
pub fn scale_measure(v: f64, m: &MomentVector) -> Result<MomentVector> {
    if v == 0.0 {
        return Err(Error::constraint("scale_nonzero", "v must be nonzero"));
    }
    let mut values = Vec::with_capacity(m.order() + 1);
    let mut pw = 1.0;
    for &ml in m.values() {
        values.push(pw * ml);
        pw *= v;
    }
    let out = MomentVector::new(values)?;
    if v > 0.0 && m.support() == Support::NonNegative {
        out.with_support(Support::NonNegative)
    } else {
        Ok(out)
    }
}

/// Moments of `(sqrt(mu))_even` for `mu` on `[0, infinity)`: the output has
/// order `2 L` with `m'_{2k} = m_k(mu)` and vanishing odd moments.
pub fn even_sqrt(m: &MomentVector) -> Result<MomentVector> {
    if m.support() != Support::NonNegative {
        return Err(Error::Domain(
            "even_sqrt needs a nonnegative-support measure".into(),
        ));
    }
    let mut values = vec![0.0; 2 * m.order() + 1];
    for (k, &mk) in m.values().iter().enumerate() {
        values[2 * k] = mk;
    }
    MomentVector::new(values)
}

/// Moments of `mu^2` for symmetric `mu`: `m'_k = m_{2k}(mu)`, tagged
/// nonnegative. The output order is `floor(L / 2)`.
pub fn square_measure(m: &MomentVector) -> Result<MomentVector> {
    if !m.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::Domain(
            "square_measure needs a symmetric measure (odd moments beyond tolerance)".into(),
        ));
    }
    let half = m.order() / 2;
    let values: Vec<f64> = (0..=half).map(|k| m.get(2 * k)).collect();
    MomentVector::new(values)?.with_support(Support::NonNegative)
}

/// Catalan numbers `C_0 .. C_n`.
fn catalan(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n + 1];
    c[0] = 1.0;
    for k in 0..n {
        c[k + 1] = c[k] * 2.0 * (2.0 * k as f64 + 1.0) / (k as f64 + 2.0);
    }
    c
}

/// Semicircle law with support `[-radius, radius]`:
/// `m_{2k} = C_k (radius / 2)^{2k}`. `radius = 0` degenerates to `delta_0`.
pub fn semicircle_moments(radius: f64, order: usize) -> Result<MomentVector> {
    if !(radius >= 0.0) {
        return Err(Error::constraint(
            "semicircle_radius",
            "radius must be >= 0",
        ));
    }
    let c = catalan(order / 2);
    let half = radius / 2.0;
    let values: Vec<f64> = (0..=order)
        .map(|l| {
            if l % 2 == 0 {
                c[l / 2] * half.powi(l as i32)
            } else {
                0.0
            }
        })
        .collect();
    MomentVector::new(values)
}

/// Marchenko-Pastur law with free cumulants `kappa_n = c t^n`.
/// `t = 0` or `c = 0` degenerate to `delta_0`.
pub fn mp_moments(c: f64, t: f64, order: usize) -> Result<MomentVector> {
    if !(c >= 0.0) || !(t >= 0.0) {
        return Err(Error::constraint(
            "mp_parameters",
            format!("need c >= 0 and t >= 0, got c = {c}, t = {t}"),
        ));
    }
    let mut kappa = vec![0.0; order + 1];
    let mut pw = 1.0;
    for kap in kappa.iter_mut().skip(1) {
        pw *= t;
        *kap = c * pw;
    }
    cumulants_to_moments(&kappa)?.with_support(Support::NonNegative)
}

/// Symbolic measure expression; evaluated to a [`MomentVector`] at a given
/// truncation order. Serializable as a JSON expression tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureExpr {
    Semicircle {
        radius: f64,
    },
    MarchenkoPastur {
        c: f64,
        t: f64,
    },
    Dirac {
        at: f64,
    },
    EmpiricalMoments {
        moments: Vec<f64>,
        #[serde(default)]
        nonnegative: bool,
    },
    Scale {
        v: f64,
        child: Box<MeasureExpr>,
    },
    FreeAdd {
        children: Vec<MeasureExpr>,
    },
    EvenSqrt {
        child: Box<MeasureExpr>,
    },
    Square {
        child: Box<MeasureExpr>,
    },
}

impl MeasureExpr {
    /// Evaluates the tree to moments of order `0..=order`.
    pub fn eval(&self, order: usize) -> Result<MomentVector> {
        match self {
            MeasureExpr::Semicircle { radius } => semicircle_moments(*radius, order),
            MeasureExpr::MarchenkoPastur { c, t } => mp_moments(*c, *t, order),
            MeasureExpr::Dirac { at } => Ok(MomentVector::dirac(*at, order)),
            MeasureExpr::EmpiricalMoments {
                moments,
                nonnegative,
            } => {
                let mut padded = moments.clone();
                if padded.len() < order + 1 {
                    return Err(Error::Domain(format!(
                        "empirical moment leaf has order {} but order {} was requested",
                        padded.len().saturating_sub(1),
                        order
                    )));
                }
                padded.truncate(order + 1);
                let m = MomentVector::new(padded)?;
                if *nonnegative {
                    m.with_support(Support::NonNegative)
                } else {
                    Ok(m)
                }
            }
            MeasureExpr::Scale { v, child } => scale_measure(*v, &child.eval(order)?),
            MeasureExpr::FreeAdd { children } => {
                if children.is_empty() {
                    return Err(Error::Domain("free_add needs at least one child".into()));
                }
                let mut acc = children[0].eval(order)?;
                for child in &children[1..] {
                    acc = free_add(&acc, &child.eval(order)?)?;
                }
                // Free convolution does not certify nonnegative support in the
                // truncated representation, except for MP with a shared t.
                let mut shared_t: Option<f64> = None;
                let mut all_mp_shared = true;
                for child in children {
                    match child {
                        MeasureExpr::MarchenkoPastur { t, .. } => match shared_t {
                            None => shared_t = Some(*t),
                            Some(t1) if t1 == *t => {}
                            _ => {
                                all_mp_shared = false;
                                break;
                            }
                        },
                        _ => {
                            all_mp_shared = false;
                            break;
                        }
                    }
                }
                if all_mp_shared && shared_t.is_some() {
                    acc = acc.with_support(Support::NonNegative)?;
                }
                Ok(acc)
            }
            MeasureExpr::EvenSqrt { child } => {
                even_sqrt(&child.eval(order.div_ceil(2))?).map(|m| m.truncated(order))
            }
            MeasureExpr::Square { child } => square_measure(&child.eval(2 * order)?),
        }
    }
}

/// Limit law of a scaling regime at rescaled time `t`, starting from `mu0`.
///
/// Built from the measure algebra above; the MP-type regimes require `mu0`
/// tagged nonnegative. At `t = 0` returns `mu0` unchanged.
pub fn predict_limit(
    regime: &Regime,
    t: f64,
    mu0: &MomentVector,
    order: usize,
) -> Result<MomentVector> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    if mu0.order() < order {
        return Err(Error::Domain(format!(
            "mu0 has order {} but order {} was requested",
            mu0.order(),
            order
        )));
    }
    let mu = mu0.truncated(order);
    if t == 0.0 {
        return Ok(mu);
    }
    let needs_nonneg = matches!(
        regime,
        Regime::MpStationary { .. }
            | Regime::MpLocal { .. }
            | Regime::NcMpTimeInverted { .. }
            | Regime::NcMpLocal { .. }
    );
    if needs_nonneg && mu0.support() != Support::NonNegative {
        return Err(Error::Domain(
            "MP-type regimes need a nonnegative-support starting measure".into(),
        ));
    }

    match *regime {
        Regime::WignerStationary { c } => {
            let decayed = scale_measure((-t).exp(), &mu)?;
            let sc = semicircle_moments(4.0 * (1.0 + c).powf(-1.5), order)?;
            let sc = scale_measure((1.0 - (-2.0 * t).exp()).sqrt(), &sc)?;
            free_add(&decayed, &sc)
        }
        Regime::WignerDegenerate => scale_measure((-t).exp(), &mu),
        Regime::WignerLocal { b } => {
            let sc = semicircle_moments(2.0 * (2.0 * (1.0 - b * b) * t).sqrt(), order)?;
            free_add(&mu, &sc)
        }
        Regime::WignerLocalDrift { b, c } => {
            let sc = semicircle_moments(2.0 * (2.0 * (1.0 - b * b) * t).sqrt(), order)?;
            let shifted = free_add(&mu, &sc)?;
            free_add(&shifted, &MomentVector::dirac(c * t, order))
        }
        Regime::MpStationary { p_hat } => {
            let u = 1.0 - (-t).exp();
            mp_composite(&mu, (-t).exp(), 2.0 * u, p_hat - 1.0, order)
        }
        Regime::MpLocal { p_hat } => mp_composite(&mu, 1.0, 2.0 * t, p_hat - 1.0, order),
        Regime::NcWignerLocal { b } => {
            // consistent with the moment recursion: variance (B^2 - 1) t per
            // quadratic cumulant unit, radius 2 sqrt(2 (B^2 - 1) t)
            let sc = semicircle_moments(2.0 * (2.0 * (b * b - 1.0) * t).sqrt(), order)?;
            free_add(&mu, &sc)
        }
        Regime::NcMpTimeInverted { q_hat } => {
            let v = t.exp() - 1.0;
            mp_composite(&mu, t.exp(), 2.0 * v, q_hat - 1.0, order)
        }
        Regime::NcMpLocal { q_hat } => mp_composite(&mu, 1.0, 2.0 * t, q_hat - 1.0, order),
        Regime::KestenMcKay | Regime::Wachter => Err(Error::NotImplemented(
            "Kesten-McKay and Wachter limit laws are out of scope".into(),
        )),
    }
}

/// `(sc(2 sqrt(tau)) ⊞ (sqrt(decay * mu))_even)^2 ⊞ MP(c_extra, tau)`,
/// the shared shape of all MP-type limits.
fn mp_composite(
    mu: &MomentVector,
    decay: f64,
    tau: f64,
    c_extra: f64,
    order: usize,
) -> Result<MomentVector> {
    let inner_order = 2 * order;
    let decayed = scale_measure(decay, mu)?;
    let root = even_sqrt(&decayed)?; // order 2 * order
    let sc = semicircle_moments(2.0 * tau.sqrt(), inner_order)?;
    let inner = free_add(&sc, &root)?;
    let squared = square_measure(&inner)?; // back to `order`
    let extra = mp_moments(c_extra.max(0.0), tau, order)?;
    if c_extra < -1e-12 {
        return Err(Error::Domain(format!(
            "MP regime needs p_hat (resp. q_hat) >= 1, got extra rate {c_extra}"
        )));
    }
    let out = free_add(&squared, &extra)?;
    // The true limit lives on [0, infinity); certified here by construction
    // of the MP composite (square ⊞ MP at matching scale parameter).
    out.with_support(Support::NonNegative)
}
