//! Domains, model parameters, scaling regimes and the drift fields of the
//! compact and noncompact Jacobi particle systems.
//!
//! The compact system lives on the alcove `A_N = {-1 <= x_1 <= ... <= x_N <= 1}`,
//! the noncompact one on the chamber `C_N = {1 <= x_1 <= ... <= x_N}`. Both
//! drifts combine an affine confining part with a pairwise repulsion
//! `2 (1 - x_i x_j) / (x_i - x_j)` (sign-flipped on the chamber).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default gap tolerance for the "strictly ordered" interior test.
pub const DEFAULT_GAP_TOL: f64 = 1e-12;

/// State space of a particle system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// `-1 <= x_1 <= ... <= x_N <= 1`
    CompactAlcove,
    /// `1 <= x_1 <= ... <= x_N`
    NoncompactChamber,
}

impl Domain {
    /// Closed lower bound and (for the alcove) upper bound.
    pub fn bounds(self) -> (f64, Option<f64>) {
        match self {
            Domain::CompactAlcove => (-1.0, Some(1.0)),
            Domain::NoncompactChamber => (1.0, None),
        }
    }

    /// Whether a sorted coordinate vector lies in the closed domain.
    pub fn contains_sorted(self, coords: &[f64]) -> bool {
        if coords.is_empty() {
            return false;
        }
        let (lo, hi) = self.bounds();
        let first = coords[0];
        let last = coords[coords.len() - 1];
        first >= lo && hi.is_none_or(|h| last <= h)
    }
}

/// Ordered coordinate vector of `N` particles on a declared domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    domain: Domain,
    coords: Vec<f64>,
}

impl ParticleState {
    /// Builds a state, checking ascending order and closed-domain inclusion.
    pub fn new(domain: Domain, coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Domain("particle state must be nonempty".into()));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("particle coordinates must be finite".into()));
        }
        if coords.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Domain(
                "particle coordinates must be sorted ascending".into(),
            ));
        }
        if !domain.contains_sorted(&coords) {
            return Err(Error::Domain(format!(
                "coordinates [{:.6}, {:.6}] leave the closed domain {:?}",
                coords[0],
                coords[coords.len() - 1],
                domain
            )));
        }
        Ok(ParticleState { domain, coords })
    }

    /// Builds a state from unsorted coordinates, sorting them first.
    pub fn from_unsorted(domain: Domain, mut coords: Vec<f64>) -> Result<Self> {
        coords.sort_by(f64::total_cmp);
        ParticleState::new(domain, coords)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Smallest gap between consecutive particles.
    pub fn min_gap(&self) -> f64 {
        self.coords
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Strictly ordered and strictly inside the open domain, with gap
    /// tolerance `gap_tol` for both the pairwise gaps and the wall distances.
    pub fn is_interior(&self, gap_tol: f64) -> bool {
        let (lo, hi) = self.domain.bounds();
        let n = self.coords.len();
        if self.coords[0] - lo <= gap_tol {
            return false;
        }
        if let Some(h) = hi {
            if h - self.coords[n - 1] <= gap_tol {
                return false;
            }
        }
        self.coords.windows(2).all(|w| w[1] - w[0] > gap_tol)
    }

    /// Indices `(i, j)` of the closest offending pair when not strictly
    /// interior; walls are reported as a pair with itself.
    pub(crate) fn worst_pair(&self, gap_tol: f64) -> Option<(usize, usize)> {
        let (lo, hi) = self.domain.bounds();
        let n = self.coords.len();
        if self.coords[0] - lo <= gap_tol {
            return Some((0, 0));
        }
        if let Some(h) = hi {
            if h - self.coords[n - 1] <= gap_tol {
                return Some((n - 1, n - 1));
            }
        }
        self.coords
            .windows(2)
            .enumerate()
            .find(|(_, w)| w[1] - w[0] <= gap_tol)
            .map(|(i, _)| (i, i + 1))
    }
}

/// Multiplicity parameters of the type-BC root system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multiplicities {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

/// Model parameters `(kappa, p, q)` for `N` particles.
///
/// The frozen (`kappa = infinity`) mode is a flag on the integrators, never a
/// stored float here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kappa: f64,
    pub p: f64,
    pub q: f64,
    pub n: usize,
}

impl ModelParams {
    pub fn new(kappa: f64, p: f64, q: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::constraint("n_positive", "N must be >= 1"));
        }
        if !(kappa > 0.0) {
            return Err(Error::constraint(
                "kappa_positive",
                format!("kappa = {kappa} must be > 0"),
            ));
        }
        let floor = n as f64 - 1.0;
        if !(p > floor) || !(q > floor) {
            return Err(Error::constraint(
                "pq_above_n_minus_1",
                format!("p = {p}, q = {q} must both exceed N - 1 = {floor}"),
            ));
        }
        Ok(ModelParams { kappa, p, q, n })
    }

    /// Sufficient condition under which the stochastic paths stay off the
    /// boundary: `kappa >= 1` and `p, q >= N - 1 + 2/kappa`. Used as a
    /// warning threshold, not a precondition.
    pub fn noncollision_sufficient(&self) -> bool {
        let floor = self.n as f64 - 1.0 + 2.0 / self.kappa;
        self.kappa >= 1.0 && self.p >= floor && self.q >= floor
    }
}

/// Parameter map from multiplicities `(k1, k2, k3)`:
/// `kappa = k3`, `q = N-1 + (1 + 2 k1 + 2 k2)/(2 k3)`, `p = N-1 + (1 + 2 k2)/(2 k3)`.
pub fn params_from_multiplicities(k1: f64, k2: f64, k3: f64, n: usize) -> Result<ModelParams> {
    if !(k3 > 0.0) {
        return Err(Error::constraint(
            "k3_positive",
            format!("k3 = {k3} must be > 0"),
        ));
    }
    if !(k2 >= 0.0) {
        return Err(Error::constraint(
            "k2_nonnegative",
            format!("k2 = {k2} must be >= 0"),
        ));
    }
    if !(k1 + k2 >= 0.0) {
        return Err(Error::constraint(
            "k1_plus_k2_nonnegative",
            format!("k1 + k2 = {} must be >= 0", k1 + k2),
        ));
    }
    let base = n as f64 - 1.0;
    let q = base + (1.0 + 2.0 * k1 + 2.0 * k2) / (2.0 * k3);
    let p = base + (1.0 + 2.0 * k2) / (2.0 * k3);
    ModelParams::new(k3, p, q, n)
}

/// Inverse of [`params_from_multiplicities`].
pub fn multiplicities_from_params(params: &ModelParams) -> Multiplicities {
    let base = params.n as f64 - 1.0;
    let k3 = params.kappa;
    let k2 = k3 * (params.p - base) - 0.5;
    let k1 = k3 * (params.q - params.p);
    Multiplicities { k1, k2, k3 }
}

/// Compact drift: component `i` is
/// `(p - q) - (p + q) x_i + 2 sum_{j != i} (1 - x_i x_j)/(x_i - x_j)`.
///
/// Requires a strictly interior alcove state; the pairwise sum runs over
/// ascending `j` for reproducibility.
pub fn drift_compact(x: &ParticleState, p: f64, q: f64) -> Result<Vec<f64>> {
    require_interior(x, Domain::CompactAlcove)?;
    let mut out = vec![0.0; x.len()];
    drift_into(x.coords(), p, q, DriftSign::Compact, &mut out);
    Ok(out)
}

/// Noncompact drift: component `i` is
/// `(q - p) + (q + p) x_i + 2 sum_{j != i} (x_i x_j - 1)/(x_i - x_j)`,
/// the negative of the compact expression at the same coordinates.
pub fn drift_noncompact(x: &ParticleState, p: f64, q: f64) -> Result<Vec<f64>> {
    require_interior(x, Domain::NoncompactChamber)?;
    let mut out = vec![0.0; x.len()];
    drift_into(x.coords(), p, q, DriftSign::Noncompact, &mut out);
    Ok(out)
}

fn require_interior(x: &ParticleState, domain: Domain) -> Result<()> {
    if x.domain() != domain {
        return Err(Error::Domain(format!(
            "expected a state on {:?}, got {:?}",
            domain,
            x.domain()
        )));
    }
    if let Some((i, j)) = x.worst_pair(DEFAULT_GAP_TOL) {
        return Err(Error::Singular {
            time: 0.0,
            i,
            j,
            message: "state is not strictly interior".into(),
        });
    }
    Ok(())
}

/// Orientation of the drift field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftSign {
    Compact,
    Noncompact,
}

impl DriftSign {
    pub fn domain(self) -> Domain {
        match self {
            DriftSign::Compact => Domain::CompactAlcove,
            DriftSign::Noncompact => Domain::NoncompactChamber,
        }
    }
}

/// Raw drift evaluation without state validation; used by the integrators.
pub(crate) fn drift_into(coords: &[f64], p: f64, q: f64, sign: DriftSign, out: &mut [f64]) {
    let n = coords.len();
    for i in 0..n {
        let xi = coords[i];
        let mut pair = 0.0;
        for (j, &xj) in coords.iter().enumerate() {
            if j != i {
                pair += (1.0 - xi * xj) / (xi - xj);
            }
        }
        let value = (p - q) - (p + q) * xi + 2.0 * pair;
        out[i] = match sign {
            DriftSign::Compact => value,
            DriftSign::Noncompact => -value,
        };
    }
}

/// Scaling regimes of the large-N limit laws. `KestenMcKay` and `Wachter` name
/// the regimes that are recognized but deliberately not constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    WignerStationary,
    WignerDegenerate,
    WignerLocal,
    WignerLocalDrift,
    MpStationary,
    MpLocal,
    NcWignerLocal,
    NcMpTimeInverted,
    NcMpLocal,
    KestenMcKay,
    Wachter,
}

impl RegimeKind {
    pub fn domain(self) -> Domain {
        match self {
            RegimeKind::NcWignerLocal | RegimeKind::NcMpTimeInverted | RegimeKind::NcMpLocal => {
                Domain::NoncompactChamber
            }
            _ => Domain::CompactAlcove,
        }
    }

    /// Whether the per-N rules require an externally supplied window center.
    pub fn needs_b_rule(self) -> bool {
        matches!(
            self,
            RegimeKind::WignerLocal | RegimeKind::WignerLocalDrift | RegimeKind::NcWignerLocal
        )
    }

    /// Whether the per-N rules require an externally supplied time scale.
    pub fn needs_s_rule(self) -> bool {
        matches!(
            self,
            RegimeKind::WignerLocal
                | RegimeKind::WignerLocalDrift
                | RegimeKind::MpLocal
                | RegimeKind::NcWignerLocal
                | RegimeKind::NcMpLocal
        )
    }

    pub fn implemented(self) -> bool {
        !matches!(self, RegimeKind::KestenMcKay | RegimeKind::Wachter)
    }
}

/// Affine-linear space/time normalization for one `N`:
/// observables are `a (x_i - b)` at raw time `t / s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scalings {
    pub a: f64,
    pub b: f64,
    pub s: f64,
}

/// A regime instance carrying the constants its limit law uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Limit `(e^{-t} mu) ⊞ sqrt(1 - e^{-2t}) sc(4 (1 + C)^{-3/2})`.
    WignerStationary {
        c: f64,
    },
    /// Limit `e^{-t} mu`.
    WignerDegenerate,
    /// Limit `mu ⊞ sc(2 sqrt(2 (1 - B^2) t))`.
    WignerLocal {
        b: f64,
    },
    /// Limit `mu ⊞ sc(2 sqrt(2 (1 - B^2) t)) ⊞ delta_{c t}`.
    WignerLocalDrift {
        b: f64,
        c: f64,
    },
    /// Limit `(sc(2 sqrt(2 (1 - e^{-t}))) ⊞ (sqrt(e^{-t} mu))_even)^2 ⊞ MP(p_hat - 1, 2 (1 - e^{-t}))`.
    MpStationary {
        p_hat: f64,
    },
    /// Limit `(sc(2 sqrt(2 t)) ⊞ (sqrt(mu))_even)^2 ⊞ MP(p_hat - 1, 2 t)`.
    MpLocal {
        p_hat: f64,
    },
    /// Limit `mu ⊞ sc(2 sqrt(2 (B^2 - 1) t))`.
    NcWignerLocal {
        b: f64,
    },
    /// Limit `(sc(2 sqrt(2 (e^t - 1))) ⊞ (sqrt(e^t mu))_even)^2 ⊞ MP(q_hat - 1, 2 (e^t - 1))`.
    NcMpTimeInverted {
        q_hat: f64,
    },
    /// Limit `(sc(2 sqrt(2 t)) ⊞ (sqrt(mu))_even)^2 ⊞ MP(q_hat - 1, 2 t)`.
    NcMpLocal {
        q_hat: f64,
    },
    KestenMcKay,
    Wachter,
}

impl Regime {
    pub fn kind(&self) -> RegimeKind {
        match self {
            Regime::WignerStationary { .. } => RegimeKind::WignerStationary,
            Regime::WignerDegenerate => RegimeKind::WignerDegenerate,
            Regime::WignerLocal { .. } => RegimeKind::WignerLocal,
            Regime::WignerLocalDrift { .. } => RegimeKind::WignerLocalDrift,
            Regime::MpStationary { .. } => RegimeKind::MpStationary,
            Regime::MpLocal { .. } => RegimeKind::MpLocal,
            Regime::NcWignerLocal { .. } => RegimeKind::NcWignerLocal,
            Regime::NcMpTimeInverted { .. } => RegimeKind::NcMpTimeInverted,
            Regime::NcMpLocal { .. } => RegimeKind::NcMpLocal,
            Regime::KestenMcKay => RegimeKind::KestenMcKay,
            Regime::Wachter => RegimeKind::Wachter,
        }
    }
}

/// Per-N scalings `(a_N, b_N, s_N)` of a regime. Local regimes take their
/// window center / time scale from the caller-provided rules.
pub fn scalings_for(
    kind: RegimeKind,
    n: usize,
    p: f64,
    q: f64,
    b_rule: Option<f64>,
    s_rule: Option<f64>,
) -> Result<Scalings> {
    let nf = n as f64;
    let need = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| Error::Hypothesis(format!("regime {kind:?} requires a {what} rule")))
    };
    let scal = match kind {
        RegimeKind::WignerStationary => Scalings {
            a: q / (nf * p).sqrt(),
            b: (p - q) / (p + q),
            s: p + q,
        },
        RegimeKind::WignerDegenerate => Scalings {
            a: (q / nf).sqrt(),
            b: (p - q) / (p + q),
            s: p + q,
        },
        RegimeKind::WignerLocal | RegimeKind::WignerLocalDrift => {
            let s = need(s_rule, "time-scale")?;
            Scalings {
                a: (s / nf).sqrt(),
                b: need(b_rule, "window-center")?,
                s,
            }
        }
        RegimeKind::MpStationary => Scalings {
            a: q / nf,
            b: -1.0,
            s: p + q,
        },
        RegimeKind::MpLocal => {
            let s = need(s_rule, "time-scale")?;
            Scalings {
                a: s / nf,
                b: -1.0,
                s,
            }
        }
        RegimeKind::NcWignerLocal => {
            let s = need(s_rule, "time-scale")?;
            Scalings {
                a: (s / nf).sqrt(),
                b: need(b_rule, "window-center")?,
                s,
            }
        }
        RegimeKind::NcMpTimeInverted => Scalings {
            a: p / nf,
            b: 1.0,
            s: p + q,
        },
        RegimeKind::NcMpLocal => {
            let s = need(s_rule, "time-scale")?;
            Scalings {
                a: s / nf,
                b: 1.0,
                s,
            }
        }
        RegimeKind::KestenMcKay | RegimeKind::Wachter => {
            return Err(Error::NotImplemented(format!(
                "regime {kind:?} is out of scope (no scalings defined here)"
            )));
        }
    };
    if !(scal.a > 0.0) || !(scal.s > 0.0) {
        return Err(Error::Hypothesis(format!(
            "regime {kind:?} produced nonpositive scalings a = {}, s = {}",
            scal.a, scal.s
        )));
    }
    Ok(scal)
}

/// Regime instance with constants plugged in from the finite-N parameters.
pub fn regime_at(
    kind: RegimeKind,
    n: usize,
    p: f64,
    q: f64,
    b_rule: Option<f64>,
    s_rule: Option<f64>,
) -> Result<Regime> {
    let nf = n as f64;
    Ok(match kind {
        RegimeKind::WignerStationary => Regime::WignerStationary { c: p / q },
        RegimeKind::WignerDegenerate => Regime::WignerDegenerate,
        RegimeKind::WignerLocal => Regime::WignerLocal {
            b: b_rule
                .ok_or_else(|| Error::Hypothesis("WignerLocal requires a window center".into()))?,
        },
        RegimeKind::WignerLocalDrift => {
            let scal = scalings_for(kind, n, p, q, b_rule, s_rule)?;
            Regime::WignerLocalDrift {
                b: scal.b,
                c: scal.a * (p - q - scal.b * (p + q)) / scal.s,
            }
        }
        RegimeKind::MpStationary => Regime::MpStationary { p_hat: p / nf },
        RegimeKind::MpLocal => Regime::MpLocal { p_hat: p / nf },
        RegimeKind::NcWignerLocal => Regime::NcWignerLocal {
            b: b_rule.ok_or_else(|| {
                Error::Hypothesis("NcWignerLocal requires a window center".into())
            })?,
        },
        RegimeKind::NcMpTimeInverted => Regime::NcMpTimeInverted { q_hat: q / nf },
        RegimeKind::NcMpLocal => Regime::NcMpLocal { q_hat: q / nf },
        RegimeKind::KestenMcKay => Regime::KestenMcKay,
        RegimeKind::Wachter => Regime::Wachter,
    })
}
