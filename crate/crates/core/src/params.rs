//! Parameter conditions, derived exponents, feasibility verdicts and the
//! Gronwall-envelope algebra.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{check_exponent, conjugate_exponent, pos, ratio, recip};

/// Absolute tolerance for the resonance exclusion `beta != -theta - beta0_bar + d/p`.
pub const RESONANCE_TOL: f64 = 1e-12;
/// Default slack for the long-time chain upper bound `2 - eps`.
pub const DEFAULT_EPS_SLACK: f64 = 1e-2;
/// Default value for the small parameters eta, delta, delta'.
pub const DEFAULT_SMALL: f64 = 1e-2;

fn de_ext<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(x) => Ok(x),
        Raw::Str(s) if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") => {
            Ok(f64::INFINITY)
        }
        Raw::Str(s) => s
            .parse::<f64>()
            .map_err(|_| D::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
    }
}

fn default_small() -> f64 {
    DEFAULT_SMALL
}

fn ser_ext<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*x)
    }
}

/// Extended-real (de)serialization for other modules' exponent fields.
pub fn de_ext_pub<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    de_ext(d)
}

pub fn ser_ext_pub<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    ser_ext(x, s)
}

/// Full scalar parameter set of the well-posedness conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterSet {
    /// Stability index of the driving noise, in (1, 2].
    pub alpha: f64,
    /// Spatial dimension.
    pub d: usize,
    /// Kernel time integrability.
    #[serde(deserialize_with = "de_ext", serialize_with = "ser_ext")]
    pub r: f64,
    /// Kernel space integrability.
    #[serde(deserialize_with = "de_ext", serialize_with = "ser_ext")]
    pub p: f64,
    /// Kernel frequency summability.
    #[serde(deserialize_with = "de_ext", serialize_with = "ser_ext")]
    pub q: f64,
    /// Kernel regularity, expected in (-2, -1).
    pub beta: f64,
    /// Initial-law regularity.
    pub beta0: f64,
    /// Initial-law space integrability.
    #[serde(deserialize_with = "de_ext", serialize_with = "ser_ext")]
    pub p0: f64,
    /// Initial-law frequency summability.
    #[serde(deserialize_with = "de_ext", serialize_with = "ser_ext")]
    pub q0: f64,
    /// Drift regularity parameter, in [0, 1/2).
    pub theta: f64,
    /// Extra initial regularity, must exceed theta.
    pub theta_bar: f64,
    #[serde(default = "default_small")]
    pub eta: f64,
    #[serde(default = "default_small")]
    pub delta: f64,
    #[serde(default = "default_small")]
    pub delta_prime: f64,
}

impl ParameterSet {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha <= 2.0) {
            return Err(Error::Domain(format!(
                "alpha = {} must lie in (1, 2]",
                self.alpha
            )));
        }
        if self.d == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        for (name, v) in [("r", self.r), ("p", self.p), ("q", self.q), ("p0", self.p0), ("q0", self.q0)] {
            check_exponent(name, v)?;
        }
        if !(self.theta >= 0.0 && self.theta < 0.5) {
            return Err(Error::Domain(format!(
                "theta = {} must lie in [0, 1/2)",
                self.theta
            )));
        }
        if !(self.eta > 0.0 && self.delta > 0.0 && self.delta_prime > 0.0) {
            return Err(Error::Domain("eta, delta, delta' must be positive".into()));
        }
        if self.theta_bar.is_finite() && self.theta.is_finite() && self.theta_bar <= self.theta {
            return Err(Error::Domain(format!(
                "theta_bar = {} must exceed theta = {}",
                self.theta_bar, self.theta
            )));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let ps: ParameterSet = serde_json::from_str(json)?;
        ps.validate()?;
        Ok(ps)
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        let mut ps = self.clone();
        ps.theta = theta;
        ps
    }

    /// `d/p` with the `d/inf = 0` convention.
    pub fn d_over_p(&self) -> f64 {
        self.d as f64 * recip(self.p)
    }

    /// Conjugate `p'` of the kernel space integrability.
    pub fn p_conj(&self) -> f64 {
        conjugate_exponent(self.p).unwrap_or(f64::INFINITY)
    }

    /// Regularity gain of the initial law,
    /// `zeta0 = (beta0 + d/p0')(1 and p0'/p)` with `inf/inf = 1`.
    pub fn zeta0(&self) -> f64 {
        let p0c = conjugate_exponent(self.p0).unwrap_or(f64::INFINITY);
        let gain = self.beta0 + self.d as f64 * recip(p0c);
        gain * ratio(p0c, self.p).min(1.0)
    }

    /// Effective initial regularity `beta0_bar = beta0 (1 and p0'/p)`.
    pub fn beta0_bar(&self) -> f64 {
        let p0c = conjugate_exponent(self.p0).unwrap_or(f64::INFINITY);
        self.beta0 * ratio(p0c, self.p).min(1.0)
    }

    /// Effective initial integrability `p0_bar = p0 and p'`.
    pub fn p0_bar(&self) -> f64 {
        self.p0.min(self.p_conj())
    }

    /// Effective initial summability `q0_bar = q0 or q0 p / p0'`.
    pub fn q0_bar(&self) -> f64 {
        let p0c = conjugate_exponent(self.p0).unwrap_or(f64::INFINITY);
        let scaled = self.q0 * ratio(self.p, p0c);
        self.q0.max(scaled)
    }
}

/// Derived exponents of the short-time, long-time and classical regimes.
#[derive(Debug, Clone, Serialize)]
pub struct DerivedQuantities {
    pub zeta0: f64,
    pub beta0_bar: f64,
    pub p0_bar: f64,
    pub q0_bar: f64,
    /// Base time-singularity exponent `gamma0 = (1/alpha)(-theta-beta+d/p-zeta0)_+`.
    pub gamma0: f64,
    /// Short-time weight exponent `gamma = eta/alpha + gamma0`.
    pub gamma: f64,
    /// Long-time short-lag exponent (equals `gamma`).
    pub gamma1: f64,
    /// Long-time large-lag exponent `gamma2 = 1/r' - 1/alpha`.
    pub gamma2: f64,
    /// Classical-regime regularity gain.
    pub gamma_cl: f64,
    /// Classical-regime weight exponent.
    pub gamma_star: f64,
    /// Admissible interval for the drift time integrability (martingale regime).
    pub r_theta_range: (f64, f64),
    /// Condition sets that do not hold for these parameters.
    pub flags: Vec<String>,
}

/// Structured verdict for one named condition.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub condition_name: String,
    pub satisfied: bool,
    /// Smallest slack among the condition's strict inequalities.
    #[serde(serialize_with = "ser_ext")]
    pub margin: f64,
    pub violated_clauses: Vec<String>,
}

struct Clause {
    label: &'static str,
    slack: f64,
    strict: bool,
}

fn report(name: &str, clauses: Vec<Clause>) -> ConditionReport {
    let mut satisfied = true;
    let mut margin = f64::INFINITY;
    let mut violated = Vec::new();
    for c in &clauses {
        let ok = if c.strict { c.slack > 0.0 } else { c.slack >= 0.0 };
        if !ok {
            satisfied = false;
            violated.push(c.label.to_string());
        }
        if c.strict {
            margin = margin.min(c.slack);
        }
    }
    ConditionReport {
        condition_name: name.to_string(),
        satisfied,
        margin,
        violated_clauses: violated,
    }
}

/// Short-time condition: lower bound, upper bound and resonance exclusion on beta.
pub fn check_c3(ps: &ParameterSet) -> ConditionReport {
    let zeta0 = ps.zeta0();
    let lower = -ps.alpha
        + ps.alpha * recip(ps.r)
        + pos(-ps.theta - ps.beta + ps.d_over_p() - zeta0);
    let upper = -1.0 - 2.0 * ps.theta;
    let resonance = -ps.theta - ps.beta0_bar() + ps.d_over_p();
    report(
        "C3",
        vec![
            Clause {
                label: "beta_lower",
                slack: ps.beta - lower,
                strict: true,
            },
            Clause {
                label: "beta_upper",
                slack: upper - ps.beta,
                strict: true,
            },
            Clause {
                label: "beta_resonance",
                slack: (ps.beta - resonance).abs() - RESONANCE_TOL,
                strict: true,
            },
        ],
    )
}

/// Martingale-solution relation on (theta, r).
pub fn check_ms(ps: &ParameterSet) -> ConditionReport {
    let r_bound = ps.alpha / (ps.alpha - 1.0);
    let theta_bound = 0.5 * (ps.alpha - ps.alpha * recip(ps.r) - 1.0);
    report(
        "MS",
        vec![
            Clause {
                label: "r_lower",
                slack: ps.r - r_bound,
                strict: true,
            },
            Clause {
                label: "theta_upper",
                slack: theta_bound - ps.theta,
                strict: true,
            },
        ],
    )
}

/// Weak-solution reinforcement `r > alpha/(alpha-1) or 2 alpha`.
pub fn check_ws(ps: &ParameterSet) -> ConditionReport {
    let r_bound = (ps.alpha / (ps.alpha - 1.0)).max(2.0 * ps.alpha);
    report(
        "WS",
        vec![Clause {
            label: "r_lower",
            slack: ps.r - r_bound,
            strict: true,
        }],
    )
}

/// Long-time chain `1 < alpha(1 - 1/r) <= min(1 + d/p, 2 - eps)`.
pub fn check_c3lt_with(ps: &ParameterSet, eps_slack: f64) -> ConditionReport {
    let a = ps.alpha * (1.0 - recip(ps.r));
    let cap = (1.0 + ps.d_over_p()).min(2.0 - eps_slack);
    report(
        "C3-LT",
        vec![
            Clause {
                label: "chain_lower",
                slack: a - 1.0,
                strict: true,
            },
            Clause {
                label: "chain_upper",
                slack: cap - a,
                strict: false,
            },
        ],
    )
}

pub fn check_c3lt(ps: &ParameterSet) -> ConditionReport {
    check_c3lt_with(ps, DEFAULT_EPS_SLACK)
}

/// Classical weak well-posedness condition on beta (theta = 0 regime).
pub fn check_c2star(ps: &ParameterSet) -> ConditionReport {
    let zeta0 = ps.zeta0();
    let lower = -ps.alpha + ps.alpha * recip(ps.r) + pos(-ps.beta + ps.d_over_p() - zeta0);
    report(
        "C2*",
        vec![Clause {
            label: "beta_lower",
            slack: ps.beta - lower,
            strict: true,
        }],
    )
}

/// Classical strong well-posedness condition on beta.
pub fn check_c2star_strong(ps: &ParameterSet) -> ConditionReport {
    let zeta0 = ps.zeta0();
    let gap = -ps.beta + ps.d_over_p() - zeta0;
    let first = 1.0 - 1.5 * ps.alpha + ps.alpha * recip(ps.r) + gap;
    let second = -ps.alpha + ps.alpha * recip(ps.r) + pos(gap);
    report(
        "C2s*",
        vec![Clause {
            label: "beta_lower",
            slack: ps.beta - first.max(second),
            strict: true,
        }],
    )
}

/// Informational prior-work conditions (no acceptance weight).
pub fn check_informational(ps: &ParameterSet) -> Vec<ConditionReport> {
    let zeta0 = ps.zeta0();
    let a_r = ps.alpha * recip(ps.r);
    let dp = ps.d_over_p();
    let gap = -ps.beta + dp - zeta0;
    vec![
        report(
            "C0",
            vec![Clause {
                label: "beta_lower",
                slack: ps.beta - (1.0 - ps.alpha + a_r + dp),
                strict: true,
            }],
        ),
        report(
            "C0s",
            vec![Clause {
                label: "beta_lower",
                slack: ps.beta - (2.0 - 1.5 * ps.alpha + a_r + dp),
                strict: true,
            }],
        ),
        report(
            "C1",
            vec![Clause {
                label: "beta_lower",
                slack: ps.beta - (1.0 - ps.alpha + a_r + pos(gap)),
                strict: true,
            }],
        ),
        report(
            "C1s",
            vec![Clause {
                label: "beta_lower",
                slack: ps.beta
                    - (2.0 - 1.5 * ps.alpha + a_r + gap).max(1.0 - ps.alpha + a_r + pos(gap)),
                strict: true,
            }],
        ),
        report(
            "C2",
            vec![Clause {
                label: "chain",
                slack: -(1.0 - ps.alpha + a_r + pos(1.0 + dp - zeta0)),
                strict: true,
            }],
        ),
        report(
            "C2s",
            vec![Clause {
                label: "beta_lower",
                slack: -1.0
                    - (2.0 - 1.5 * ps.alpha + a_r + dp - zeta0)
                        .max(-ps.alpha + a_r + pos(1.0 + dp - zeta0)),
                strict: true,
            }],
        ),
    ]
}

/// Feasible set of theta for fixed remaining parameters: an interval with a
/// possible excluded resonance point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaInterval {
    pub lo: f64,
    /// Whether `lo` itself is feasible (`theta = 0` endpoint only).
    pub lo_inclusive: bool,
    pub hi: f64,
    pub excluded: Vec<f64>,
}

impl ThetaInterval {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !self.lo_inclusive)
    }

    pub fn contains(&self, theta: f64) -> bool {
        if self.is_empty() {
            return false;
        }
        let above = if self.lo_inclusive {
            theta >= self.lo
        } else {
            theta > self.lo
        };
        above
            && theta < self.hi
            && !self
                .excluded
                .iter()
                .any(|e| (theta - e).abs() <= RESONANCE_TOL)
    }
}

/// Set of theta in [0, 1/2) jointly satisfying (C3) and (MS), computed from
/// the clause inequalities in closed form.
pub fn feasible_theta_interval(ps: &ParameterSet) -> Option<ThetaInterval> {
    let a_r = ps.alpha * recip(ps.r);
    // MS r-clause
    if !(ps.r > ps.alpha / (ps.alpha - 1.0)) {
        return None;
    }
    let zeta0 = ps.zeta0();
    let c = -ps.beta + ps.d_over_p() - zeta0;
    let base = -ps.alpha + a_r;
    // C3 lower clause as a function of theta is beta > base + (c - theta)_+
    if ps.beta <= base {
        return None;
    }
    let theta_star = c - (ps.beta - base); // always < c when beta > base
    let (lo, lo_inclusive) = if theta_star < 0.0 {
        (0.0, true)
    } else {
        (theta_star, false)
    };
    let hi = 0.5f64
        .min(0.5 * (ps.alpha - a_r - 1.0))
        .min((-1.0 - ps.beta) / 2.0);
    let resonance = -ps.beta - ps.beta0_bar() + ps.d_over_p();
    let mut excluded = Vec::new();
    if resonance > lo && resonance < hi {
        excluded.push(resonance);
    }
    let interval = ThetaInterval {
        lo,
        lo_inclusive,
        hi,
        excluded,
    };
    if interval.is_empty() {
        None
    } else {
        Some(interval)
    }
}

/// Derived singularity and weight exponents for all regimes.
pub fn gamma_exponents(ps: &ParameterSet) -> Result<DerivedQuantities> {
    ps.validate()?;
    let zeta0 = ps.zeta0();
    let gamma0 = pos(-ps.theta - ps.beta + ps.d_over_p() - zeta0) / ps.alpha;
    let gamma = ps.eta / ps.alpha + gamma0;
    let gamma2 = 1.0 - recip(ps.r) - 1.0 / ps.alpha;
    let p_big = ps.alpha - 1.0 + ps.beta - ps.alpha * recip(ps.r) - ps.d_over_p() + zeta0;
    let gamma_cl = ps.eta * p_big;
    let gamma_star = (-ps.beta + ps.d_over_p() - zeta0
        + (1.0 + ps.eta) / (2.0 * ps.eta) * gamma_cl)
        / ps.alpha;

    let mut flags = Vec::new();
    let c3 = check_c3(ps);
    if !c3.satisfied {
        flags.push("C3".into());
    } else {
        // gamma must leave an integrable singularity: gamma < 1/r' + beta/alpha
        let cap = 1.0 - recip(ps.r) + ps.beta / ps.alpha;
        if gamma >= cap {
            return Err(Error::Infeasible(format!(
                "gamma = {gamma} >= 1/r' + beta/alpha = {cap} despite C3; eta too large"
            )));
        }
    }
    if !check_ms(ps).satisfied {
        flags.push("MS".into());
    }
    if !check_ws(ps).satisfied {
        flags.push("WS".into());
    }
    if !check_c3lt(ps).satisfied {
        flags.push("C3-LT".into());
    }
    if !check_c2star(ps).satisfied {
        flags.push("C2*".into());
    }

    Ok(DerivedQuantities {
        zeta0,
        beta0_bar: ps.beta0_bar(),
        p0_bar: ps.p0_bar(),
        q0_bar: ps.q0_bar(),
        gamma0,
        gamma,
        gamma1: gamma,
        gamma2,
        gamma_cl,
        gamma_star,
        r_theta_range: (ps.alpha, ps.r),
        flags,
    })
}

/// Exponent of the Gronwall horizon increment,
/// `gamma - 1 + 1/r - (beta - delta + eta)/alpha` (negative when feasible).
pub fn horizon_exponent(ps: &ParameterSet, gamma: f64) -> f64 {
    gamma - 1.0 + recip(ps.r) - (ps.beta - ps.delta + ps.eta) / ps.alpha
}

/// Horizon increment `(4 C0 Cb)^(1/exponent_denom)`.
pub fn time_horizon(c0: f64, cb: f64, exponent_denom: f64) -> Result<f64> {
    if !(exponent_denom < 0.0) {
        return Err(Error::Domain(format!(
            "horizon exponent {exponent_denom} must be negative"
        )));
    }
    if !(c0 > 0.0 && cb > 0.0) {
        return Err(Error::Domain("horizon constants must be positive".into()));
    }
    Ok((4.0 * c0 * cb).powf(1.0 / exponent_denom))
}

/// Long-time horizon: the short-time increment when the initial law is large,
/// the full horizon `big_t` under the smallness gate.
pub fn time_horizon_long(short_increment: f64, big_t: f64, mu_norm: f64, gate: f64) -> f64 {
    if mu_norm < gate {
        big_t
    } else {
        short_increment
    }
}

/// Roots of `C_b x^2 - x + C_mu`: `(R-, R+)` when `C_mu C_b < 1/4`.
pub fn gronwall_roots(c_mu: f64, c_b: f64) -> Result<Option<(f64, f64)>> {
    if c_mu < 0.0 || c_b < 0.0 {
        return Err(Error::Domain("gronwall coefficients must be >= 0".into()));
    }
    if c_b == 0.0 {
        return Ok(Some((c_mu, f64::INFINITY)));
    }
    let x = c_mu * c_b;
    if !(x < 0.25) {
        return Ok(None);
    }
    let s = (1.0 - 4.0 * x).sqrt();
    // cancellation-free form of the small root
    let r_minus = 2.0 * c_mu / (1.0 + s);
    let r_plus = (1.0 + s) / (2.0 * c_b);
    Ok(Some((r_minus, r_plus)))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Example-1 parameters: alpha=2, p=r=inf, beta=-1.9, beta0=1.45, theta=0.44.
    pub(crate) fn example_short() -> ParameterSet {
        ParameterSet {
            alpha: 2.0,
            d: 1,
            r: f64::INFINITY,
            p: f64::INFINITY,
            q: f64::INFINITY,
            beta: -1.9,
            beta0: 1.45,
            p0: 1.0,
            q0: f64::INFINITY,
            theta: 0.44,
            theta_bar: 0.48,
            eta: DEFAULT_SMALL,
            delta: DEFAULT_SMALL,
            delta_prime: DEFAULT_SMALL,
        }
    }

    fn example_long() -> ParameterSet {
        ParameterSet {
            alpha: 1.9,
            d: 1,
            r: f64::INFINITY,
            p: 1.0,
            q: f64::INFINITY,
            beta: -1.8,
            beta0: 2.4,
            p0: 1.0,
            q0: f64::INFINITY,
            theta: 0.35,
            theta_bar: 0.40,
            eta: DEFAULT_SMALL,
            delta: DEFAULT_SMALL,
            delta_prime: DEFAULT_SMALL,
        }
    }

    #[test]
    fn zeta0_examples() {
        let ps = example_short();
        assert!((ps.zeta0() - 1.45).abs() < 1e-14);

        let mut flat = ps.clone();
        flat.beta0 = 0.0;
        assert_eq!(flat.zeta0(), 0.0);

        let lt = example_long();
        assert!((lt.zeta0() - 2.4).abs() < 1e-14);
    }

    #[test]
    fn zeta0_infinity_convention_is_stable() {
        let mut ps = example_short();
        let exact = ps.zeta0();
        ps.p = 1e9;
        ps.r = 1e9;
        assert!((ps.zeta0() - exact).abs() < 1e-6);
    }

    #[test]
    fn c3_example_margins() {
        let rep = check_c3(&example_short());
        assert!(rep.satisfied, "violated: {:?}", rep.violated_clauses);
        assert!((rep.margin - 0.01).abs() < 1e-9, "margin = {}", rep.margin);
    }

    #[test]
    fn c3_violated_without_initial_regularity() {
        let mut ps = example_short();
        ps.beta0 = 0.0;
        let rep = check_c3(&ps);
        assert!(!rep.satisfied);
        assert!(rep.violated_clauses.contains(&"beta_lower".to_string()));
    }

    #[test]
    fn c3_upper_bound_is_strict() {
        let mut ps = example_short();
        ps.theta = 0.0;
        ps.theta_bar = 0.1;
        ps.beta = -1.0;
        let rep = check_c3(&ps);
        assert!(!rep.satisfied);
        assert!(rep.violated_clauses.contains(&"beta_upper".to_string()));
    }

    #[test]
    fn ms_and_ws_verdicts() {
        let rep = check_ms(&example_short());
        assert!(rep.satisfied);
        assert!((rep.margin - 0.06).abs() < 1e-12);

        let mut ps = example_short();
        ps.r = 4.0;
        assert!(!check_ws(&ps).satisfied, "r = 2 alpha must fail strictness");

        ps.alpha = 1.5;
        ps.r = 3.0;
        assert!(!check_ms(&ps).satisfied, "r = alpha/(alpha-1) boundary");
    }

    #[test]
    fn ws_implies_ms_r_clause() {
        for r in [4.2, 5.0, 10.0, f64::INFINITY] {
            for alpha in [1.2, 1.5, 2.0] {
                let mut ps = example_short();
                ps.alpha = alpha;
                ps.r = r;
                if check_ws(&ps).satisfied {
                    assert!(ps.r > ps.alpha / (ps.alpha - 1.0));
                }
            }
        }
    }

    #[test]
    fn c3lt_examples() {
        let lt = example_long();
        assert!(check_c3lt(&lt).satisfied);

        let mut ps = example_short(); // alpha = 2, r = inf
        assert!(!check_c3lt(&ps).satisfied);

        ps.r = 2.0;
        let rep = check_c3lt(&ps);
        assert!(!rep.satisfied, "alpha(1 - 1/r) = 1 must fail strictly");
        assert!(rep.violated_clauses.contains(&"chain_lower".to_string()));
    }

    #[test]
    fn c2star_examples() {
        // zeta0 = 2(1 - 0.1) + 0.01 via beta0 on p0 = 1, p = inf
        let mut ps = example_short();
        ps.theta = 0.0;
        ps.theta_bar = 0.1;
        ps.beta0 = 2.0 * (1.0 - 0.1) + 0.01;
        assert!(check_c2star(&ps).satisfied);

        ps.beta0 = 0.0;
        ps.beta = -1.5;
        let rep = check_c2star(&ps);
        assert!(!rep.satisfied, "(-beta)_+ = 1.5 forces beta > -0.5");

        ps.beta = -1.0;
        ps.beta0 = 1.0;
        let rep = check_c2star(&ps);
        assert!(rep.satisfied);
        assert!((rep.margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn theta_interval_example_one() {
        let iv = feasible_theta_interval(&example_short()).expect("nonempty");
        assert!((iv.lo - 0.35).abs() < 1e-12);
        assert!((iv.hi - 0.45).abs() < 1e-12);
        assert!(iv.contains(0.44));
        // intersects the near-1/2 region
        assert!(iv.contains(0.42));
    }

    #[test]
    fn theta_interval_degenerate_r() {
        let mut ps = example_short();
        ps.r = 2.0; // alpha - alpha/r - 1 = 0
        assert!(feasible_theta_interval(&ps).is_none());
    }

    fn scan_matches_interval(ps: &ParameterSet) {
        let iv = feasible_theta_interval(ps);
        let step = 1e-4;
        let mut k = 0usize;
        loop {
            let theta = k as f64 * step;
            if theta >= 0.5 {
                break;
            }
            let mut probe = ps.with_theta(theta);
            probe.theta_bar = f64::INFINITY;
            let brute = check_c3(&probe).satisfied && check_ms(&probe).satisfied;
            let analytic = iv.as_ref().map_or(false, |iv| iv.contains(theta));
            // skip points within resonance tolerance of the excluded set
            let near_resonance = iv
                .as_ref()
                .map_or(false, |iv| iv.excluded.iter().any(|e| (theta - e).abs() < 1e-9));
            if !near_resonance {
                assert_eq!(
                    brute, analytic,
                    "disagreement at theta = {theta} for {ps:?}"
                );
            }
            k += 1;
        }
    }

    #[test]
    fn theta_interval_matches_brute_force_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        scan_matches_interval(&example_short());
        scan_matches_interval(&example_long());
        for _ in 0..100 {
            let ps = ParameterSet {
                alpha: rng.gen_range(1.1..=2.0),
                d: if rng.gen_bool(0.5) { 1 } else { 2 },
                r: if rng.gen_bool(0.3) {
                    f64::INFINITY
                } else {
                    rng.gen_range(1.5..40.0)
                },
                p: if rng.gen_bool(0.3) {
                    f64::INFINITY
                } else {
                    rng.gen_range(1.0..20.0)
                },
                q: f64::INFINITY,
                beta: rng.gen_range(-1.99..-1.01),
                beta0: rng.gen_range(0.0..3.0),
                p0: if rng.gen_bool(0.5) {
                    1.0
                } else {
                    rng.gen_range(1.0..5.0)
                },
                q0: f64::INFINITY,
                theta: 0.0,
                theta_bar: f64::INFINITY,
                eta: DEFAULT_SMALL,
                delta: DEFAULT_SMALL,
                delta_prime: DEFAULT_SMALL,
            };
            scan_matches_interval(&ps);
        }
    }

    #[test]
    fn gamma_exponent_examples() {
        let mut ps = example_short();
        ps.eta = 0.02;
        let dq = gamma_exponents(&ps).unwrap();
        assert!((dq.gamma0 - 0.005).abs() < 1e-12);
        assert!((dq.gamma - 0.015).abs() < 1e-12);
        assert!(dq.flags.iter().any(|f| f == "C3-LT"));
        assert!((dq.gamma2 - 0.5).abs() < 1e-12);

        // positive part vanishing leaves gamma = eta / alpha
        let mut smooth = example_short();
        smooth.beta0 = 3.0;
        let dq = gamma_exponents(&smooth).unwrap();
        assert!((dq.gamma - smooth.eta / smooth.alpha).abs() < 1e-15);
    }

    #[test]
    fn horizon_examples() {
        // unit base
        assert!((time_horizon(0.25, 1.0, -3.0).unwrap() - 1.0).abs() < 1e-15);
        // (1/2)^(-1/2) = sqrt(2)
        let h = time_horizon(0.125, 1.0, -2.0).unwrap();
        assert!((h - 2.0f64.sqrt()).abs() < 1e-14);
        // monotone: larger constants shrink the horizon
        let h1 = time_horizon(1.0, 1.0, -2.0).unwrap();
        let h2 = time_horizon(10.0, 1.0, -2.0).unwrap();
        assert!(h2 < h1 && h2 < 1.0);
        assert!(time_horizon(1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn horizon_long_gate() {
        assert_eq!(time_horizon_long(0.3, 8.0, 0.5, 1.0), 8.0);
        assert_eq!(time_horizon_long(0.3, 8.0, 2.0, 1.0), 0.3);
    }

    fn refine_root(c_mu: f64, c_b: f64, mut x: f64) -> f64 {
        // Newton refinement on C_b x^2 - x + C_mu
        for _ in 0..60 {
            let f = c_b * x * x - x + c_mu;
            let df = 2.0 * c_b * x - 1.0;
            x -= f / df;
        }
        x
    }

    #[test]
    fn gronwall_root_examples() {
        // degenerate quadratic
        let (rm, rp) = gronwall_roots(0.0, 0.5).unwrap().unwrap();
        assert_eq!(rm, 0.0);
        assert!((rp - 2.0).abs() < 1e-14);
        // discriminant boundary: strict inequality required
        assert!(gronwall_roots(0.5, 0.5).unwrap().is_none());
        // oracle: root refinement on the quadratic
        let (rm, rp) = gronwall_roots(0.1, 0.5).unwrap().unwrap();
        let rm_oracle = refine_root(0.1, 0.5, 0.1);
        let rp_oracle = refine_root(0.1, 0.5, 2.0);
        assert!((rm - rm_oracle).abs() < 1e-12, "{rm} vs {rm_oracle}");
        assert!((rp - rp_oracle).abs() < 1e-12, "{rp} vs {rp_oracle}");
        // c_b = 0 limit
        let (rm, rp) = gronwall_roots(0.3, 0.0).unwrap().unwrap();
        assert_eq!(rm, 0.3);
        assert!(rp.is_infinite());
        assert!(gronwall_roots(-0.1, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn roots_satisfy_polynomial(c_mu in 1e-8f64..10.0, x in 1e-8f64..0.2499) {
            let c_b = x / c_mu;
            let (rm, rp) = gronwall_roots(c_mu, c_b).unwrap().unwrap();
            for root in [rm, rp] {
                let res = c_b * root * root - root + c_mu;
                let scale = (c_b * root * root).abs().max(root.abs()).max(c_mu.abs()).max(1e-300);
                prop_assert!(res.abs() <= 1e-12 * scale, "residual {res} at root {root}");
            }
        }

        #[test]
        fn small_root_monotone_in_c_mu(c_mu in 0.0f64..0.4, bump in 1e-6f64..0.1, c_b in 1e-6f64..0.5) {
            prop_assume!((c_mu + bump) * c_b < 0.2499);
            let (r1, _) = gronwall_roots(c_mu, c_b).unwrap().unwrap();
            let (r2, _) = gronwall_roots(c_mu + bump, c_b).unwrap().unwrap();
            prop_assert!(r2 >= r1);
        }
    }

    #[test]
    fn params_json_accepts_inf() {
        let json = r#"{"alpha": 2.0, "d": 1, "r": "inf", "p": "inf", "q": "inf",
            "beta": -1.9, "beta0": 1.45, "p0": 1.0, "q0": "inf",
            "theta": 0.44, "theta_bar": 0.48}"#;
        let ps = ParameterSet::from_json(json).unwrap();
        assert!(ps.r.is_infinite());
        assert_eq!(ps.eta, DEFAULT_SMALL);
        assert!(check_c3(&ps).satisfied);
    }
}
