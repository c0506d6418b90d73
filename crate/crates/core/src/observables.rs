//! Moments `M_r`, running integrals `I_r(t) = ∫₀ᵗ M_r ds`, and the moment
//! integrability ladder.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{weighted_norm, Density};
use crate::summation::kahan_sum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("moment order must be finite and >= 0 (got {0})")]
    NegativeOrder(f64),
    #[error("moment ladder precondition violated: {0}")]
    LadderDomain(String),
    #[error("order {0} is not sampled in the moment series")]
    MissingOrder(f64),
    #[error("moment series sample times must increase ({prev} then {next})")]
    NonMonotoneTime { prev: f64, next: f64 },
    #[error("sample has {got} moment values, series tracks {expected}")]
    Width { expected: usize, got: usize },
}

type OResult<T> = std::result::Result<T, ObservableError>;

/// `M_r = Σ_i p_i^r v_i Δ_i` with unchecked order.
pub fn moment(d: &Density, r: f64) -> f64 {
    let g = d.grid();
    if r == 0.0 {
        return kahan_sum(d.values().iter().zip(g.widths()).map(|(v, w)| v * w));
    }
    if r == 1.0 {
        return kahan_sum(
            d.values()
                .iter()
                .zip(g.widths())
                .zip(g.pivots())
                .map(|((v, w), p)| p * v * w),
        );
    }
    kahan_sum(
        d.values()
            .iter()
            .zip(g.widths())
            .zip(g.pivots())
            .map(|((v, w), p)| p.powf(r) * v * w),
    )
}

/// Moments of `d` for each requested order.
pub fn moments(d: &Density, orders: &[f64]) -> OResult<Vec<f64>> {
    orders
        .iter()
        .map(|&r| {
            if r.is_finite() && r >= 0.0 {
                Ok(moment(d, r))
            } else {
                Err(ObservableError::NegativeOrder(r))
            }
        })
        .collect()
}

/// Time series of moments with trapezoid running integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    orders: Vec<f64>,
    times: Vec<f64>,
    /// `values[k][j]` is `M_{orders[j]}` at `times[k]`.
    values: Vec<Vec<f64>>,
    integrals: Vec<Vec<f64>>,
}

impl MomentSeries {
    /// Tracks `M0, M1, M2` followed by any further `extra` orders.
    pub fn new(extra: &[f64]) -> OResult<Self> {
        let mut orders = vec![0.0, 1.0, 2.0];
        for &r in extra {
            if !(r.is_finite() && r >= 0.0) {
                return Err(ObservableError::NegativeOrder(r));
            }
            if !orders.contains(&r) {
                orders.push(r);
            }
        }
        Ok(Self {
            orders,
            times: Vec::new(),
            values: Vec::new(),
            integrals: Vec::new(),
        })
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Orders beyond the mandatory `M0, M1, M2`.
    pub fn extra_orders(&self) -> &[f64] {
        &self.orders[3..]
    }

    pub fn push(&mut self, d: &Density) -> OResult<()> {
        let values = moments(d, &self.orders)?;
        self.push_values(d.t(), values)
    }

    pub fn push_values(&mut self, t: f64, values: Vec<f64>) -> OResult<()> {
        if values.len() != self.orders.len() {
            return Err(ObservableError::Width {
                expected: self.orders.len(),
                got: values.len(),
            });
        }
        let integrals = match (self.times.last(), self.values.last(), self.integrals.last()) {
            (Some(&t0), Some(m0), Some(i0)) => {
                if t <= t0 {
                    return Err(ObservableError::NonMonotoneTime { prev: t0, next: t });
                }
                let h = t - t0;
                i0.iter()
                    .zip(m0)
                    .zip(&values)
                    .map(|((i, a), b)| i + 0.5 * h * (a + b))
                    .collect()
            }
            _ => vec![0.0; values.len()],
        };
        self.times.push(t);
        self.values.push(values);
        self.integrals.push(integrals);
        Ok(())
    }

    fn index_of(&self, order: f64) -> OResult<usize> {
        self.orders
            .iter()
            .position(|&r| r == order)
            .ok_or(ObservableError::MissingOrder(order))
    }

    /// `M_order` at every sample time.
    pub fn moment(&self, order: f64) -> OResult<Vec<f64>> {
        let j = self.index_of(order)?;
        Ok(self.values.iter().map(|row| row[j]).collect())
    }

    /// `I_order` at every sample time.
    pub fn integral(&self, order: f64) -> OResult<Vec<f64>> {
        let j = self.index_of(order)?;
        Ok(self.integrals.iter().map(|row| row[j]).collect())
    }

    /// All moment values of sample `k`, in order-list order.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k]
    }
}

/// Why the ladder stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderTermination {
    /// Reached an order with `ρ − μ ≥ 1`.
    Reached,
    /// `1 + ν ≤ μ`: the ladder does not climb.
    ConditionViolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderResult {
    pub mu: f64,
    pub nu: f64,
    pub rho0: f64,
    pub delta: f64,
    /// `ρ_0 < ρ_1 < …`, ending with the first order satisfying `ρ − μ ≥ 1`.
    pub sequence: Vec<f64>,
    /// `1 + ν − μ`.
    pub increment: f64,
    /// `2 + ν − δ` when the ladder terminates normally.
    pub terminal_order: Option<f64>,
    pub termination: LadderTermination,
}

/// Climbs the integrability ladder: from `I_ρ < ∞` with `ρ − μ < 1` one
/// obtains `I_{ρ+ν−μ+1} < ∞`; once `ρ − μ ≥ 1` the terminal order is `2 + ν − δ`.
pub fn moment_ladder(mu: f64, nu: f64, rho0: f64, delta: f64) -> OResult<LadderResult> {
    let mut bad = Vec::new();
    if !(0.0..1.0).contains(&mu) {
        bad.push(format!("mu must lie in [0, 1) (got {mu})"));
    }
    if !(nu.is_finite() && nu > -1.0) {
        bad.push(format!("nu must be > -1 (got {nu})"));
    }
    if !(rho0.is_finite() && rho0 >= 1.0) {
        bad.push(format!("rho0 must be >= 1 (got {rho0})"));
    }
    if !(rho0 > mu) {
        bad.push(format!("rho0 must exceed mu (got rho0={rho0}, mu={mu})"));
    }
    if !(delta.is_finite() && delta > 0.0) {
        bad.push(format!("delta must be > 0 (got {delta})"));
    }
    if !bad.is_empty() {
        return Err(ObservableError::LadderDomain(bad.join("; ")));
    }
    let increment = 1.0 + nu - mu;
    if 1.0 + nu <= mu {
        return Ok(LadderResult {
            mu,
            nu,
            rho0,
            delta,
            sequence: vec![rho0],
            increment,
            terminal_order: None,
            termination: LadderTermination::ConditionViolated,
        });
    }
    let mut sequence = vec![rho0];
    let mut rho = rho0;
    while rho - mu < 1.0 {
        rho += increment;
        sequence.push(rho);
    }
    Ok(LadderResult {
        mu,
        nu,
        rho0,
        delta,
        sequence,
        increment,
        terminal_order: Some(2.0 + nu - delta),
        termination: LadderTermination::Reached,
    })
}

/// Growth diagnostics for `I_order`. Finiteness on the untruncated domain is
/// not decidable from a finite run; these are trends only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub order: f64,
    pub t_final: f64,
    pub integral: f64,
    /// `I(T) / I(T/2)`.
    pub half_time_ratio: Option<f64>,
    /// `log₂(M(T) / M(T/2))`.
    pub growth_exponent: Option<f64>,
    pub power_limit: f64,
    /// Set when `growth_exponent > power_limit`.
    pub fast_growth: bool,
}

impl TrendReport {
    pub fn bounded(&self) -> bool {
        !self.fast_growth
    }
}

/// Default power of `t` above which moment growth is flagged.
pub const DEFAULT_GROWTH_POWER: f64 = 2.0;

pub fn integrability_probe(series: &MomentSeries, order: f64, power_limit: f64) -> OResult<TrendReport> {
    let m = series.moment(order)?;
    let integ = series.integral(order)?;
    let times = series.times();
    let Some(&t_final) = times.last() else {
        return Ok(TrendReport {
            order,
            t_final: 0.0,
            integral: 0.0,
            half_time_ratio: None,
            growth_exponent: None,
            power_limit,
            fast_growth: false,
        });
    };
    let integral = *integ.last().unwrap();
    let t0 = times[0];
    let half = t0 + 0.5 * (t_final - t0);
    let (mut half_ratio, mut growth) = (None, None);
    if times.len() >= 2 && t_final > t0 {
        let k = times.partition_point(|&t| t <= half).clamp(1, times.len() - 1);
        let (ta, tb) = (times[k - 1], times[k]);
        let s = (half - ta) / (tb - ta);
        let m_half = m[k - 1] + s * (m[k] - m[k - 1]);
        let i_half = integ[k - 1] + (half - ta) * (m[k - 1] + 0.5 * s * (m[k] - m[k - 1]));
        if i_half > 0.0 {
            half_ratio = Some(integral / i_half);
        }
        let m_final = *m.last().unwrap();
        if m_half > 0.0 && m_final > 0.0 {
            growth = Some((m_final / m_half).log2());
        }
    }
    Ok(TrendReport {
        order,
        t_final,
        integral,
        half_time_ratio: half_ratio,
        growth_exponent: growth,
        power_limit,
        fast_growth: growth.is_some_and(|g| g > power_limit),
    })
}

/// Discrete X-norm of every sample, for convenience when building tables.
pub fn xnorm(d: &Density) -> f64 {
    weighted_norm(d)
}
