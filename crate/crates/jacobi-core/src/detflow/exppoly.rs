//! Exponential-polynomial sums `sum_j c_j t^{d_j} e^{r_j t}`: the closed-form
//! representation of the linearized elementary-symmetric trajectories.
//!
//! The only nontrivial operation is variation of constants against a rate
//! `c`: integrals of `t^d e^{r t}` stay in the class, with a power bump
//! `t^{d+1} / (d+1)` when `r` coincides with `c` within the rate tolerance.

use serde::{Deserialize, Serialize};

/// Two rates are treated as equal (resonant) when
/// `|r - r'| < RATE_TOL * (1 + |r|)`.
pub const RATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpPolyTerm {
    pub coef: f64,
    pub power: u32,
    pub rate: f64,
}

/// `sum_j coef_j * t^{power_j} * e^{rate_j t}` with merged, pruned terms.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExpPolySum {
    terms: Vec<ExpPolyTerm>,
}

fn rates_equal(r: f64, r2: f64) -> bool {
    (r - r2).abs() < RATE_TOL * (1.0 + r.abs())
}

impl ExpPolySum {
    pub fn zero() -> Self {
        ExpPolySum { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        ExpPolySum::from_terms(vec![ExpPolyTerm {
            coef: c,
            power: 0,
            rate: 0.0,
        }])
    }

    pub fn exponential(c: f64, rate: f64) -> Self {
        ExpPolySum::from_terms(vec![ExpPolyTerm {
            coef: c,
            power: 0,
            rate,
        }])
    }

    /// Builds a sum, merging terms with identical `(power, rate)` and pruning
    /// zero coefficients.
    pub fn from_terms(terms: Vec<ExpPolyTerm>) -> Self {
        let mut merged: Vec<ExpPolyTerm> = Vec::with_capacity(terms.len());
        for t in terms {
            if t.coef == 0.0 {
                continue;
            }
            if let Some(existing) = merged
                .iter_mut()
                .find(|m| m.power == t.power && rates_equal(m.rate, t.rate))
            {
                existing.coef += t.coef;
            } else {
                merged.push(t);
            }
        }
        merged.retain(|t| t.coef != 0.0);
        merged.sort_by(|x, y| x.rate.total_cmp(&y.rate).then(x.power.cmp(&y.power)));
        ExpPolySum { terms: merged }
    }

    pub fn terms(&self) -> &[ExpPolyTerm] {
        &self.terms
    }

    pub fn rates(&self) -> Vec<f64> {
        let mut rates: Vec<f64> = Vec::new();
        for t in &self.terms {
            if !rates.iter().any(|&r| rates_equal(r, t.rate)) {
                rates.push(t.rate);
            }
        }
        rates
    }

    /// Coefficient sum of the degree-zero, rate-zero part (the value at 0 of
    /// the constant component).
    pub fn constant_part(&self) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.power == 0 && rates_equal(t.rate, 0.0))
            .map(|t| t.coef)
            .sum()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| term.coef * t.powi(term.power as i32) * (term.rate * t).exp())
            .sum()
    }

    pub fn add(&self, other: &ExpPolySum) -> ExpPolySum {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        ExpPolySum::from_terms(terms)
    }

    pub fn scaled(&self, factor: f64) -> ExpPolySum {
        ExpPolySum::from_terms(
            self.terms
                .iter()
                .map(|t| ExpPolyTerm {
                    coef: t.coef * factor,
                    ..*t
                })
                .collect(),
        )
    }

    /// Solution of `f'(t) = c f(t) + g(t)`, `f(0) = f0`, with `g = self`:
    /// `f(t) = e^{c t} f0 + int_0^t e^{c (t - s)} g(s) ds`, computed in
    /// closed form term by term.
    pub fn variation_of_constants(&self, c: f64, f0: f64) -> ExpPolySum {
        let mut terms = vec![ExpPolyTerm {
            coef: f0,
            power: 0,
            rate: c,
        }];
        for term in &self.terms {
            if rates_equal(term.rate, c) {
                // resonance: int_0^t s^d e^{c s} ds against e^{c (t - s)}
                terms.push(ExpPolyTerm {
                    coef: term.coef / (term.power as f64 + 1.0),
                    power: term.power + 1,
                    rate: c,
                });
            } else {
                // int_0^t s^d e^{delta s} ds = [e^{delta s} sum_{j=0}^{d}
                //   (-1)^j (d!/(d-j)!) s^{d-j} / delta^{j+1}]_0^t
                let delta = term.rate - c;
                let d = term.power;
                let mut fall = 1.0; // d! / (d - j)!
                let mut inv = 1.0 / delta;
                for j in 0..=d {
                    terms.push(ExpPolyTerm {
                        coef: term.coef * sign_pow(j) * fall * inv,
                        power: d - j,
                        rate: term.rate,
                    });
                    fall *= (d - j) as f64;
                    inv /= delta;
                }
                // boundary term at s = 0 (only the s^0 summand survives)
                terms.push(ExpPolyTerm {
                    coef: -term.coef * sign_pow(d) * factorial(d) * inv * delta,
                    power: 0,
                    rate: c,
                });
            }
        }
        ExpPolySum::from_terms(terms)
    }
}

fn sign_pow(j: u32) -> f64 {
    if j.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn factorial(d: u32) -> f64 {
    (1..=d).map(|k| k as f64).product()
}
