//! Per-iteration solver traces shared by every method.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DEFAULT_ACTIVE_TOL;
use crate::kkt::residuals_from_evaluation;
use crate::linalg::{norm, pos_norm};
use crate::problem::{OracleCounter, ProblemInstance};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Imela,
    Ippp,
    Splm,
    Ssg,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Imela, Method::Ippp, Method::Splm, Method::Ssg];

    pub fn name(self) -> &'static str {
        match self {
            Method::Imela => "imela",
            Method::Ippp => "ippp",
            Method::Splm => "splm",
            Method::Ssg => "ssg",
        }
    }

    /// Double-loop methods are budgeted by accumulated inner steps.
    pub fn is_double_loop(self) -> bool {
        matches!(self, Method::Imela | Method::Ippp)
    }

    pub fn has_multipliers(self) -> bool {
        self != Method::Ssg
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> std::result::Result<Self, Error> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "imela" => Ok(Method::Imela),
            "ippp" => Ok(Method::Ippp),
            "splm" => Ok(Method::Splm),
            "ssg" => Ok(Method::Ssg),
            _ => Err(Error::Config(format!("unknown method '{s}'"))),
        }
    }
}

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Budget {
    /// Number of outer iterations.
    Outer(usize),
    /// Stop after the first outer iteration at which the accumulated number of
    /// gradient steps reaches the threshold.
    Steps(u64),
}

impl Budget {
    pub fn exhausted(&self, outer_done: usize, steps_done: u64) -> bool {
        match *self {
            Budget::Outer(t) => outer_done >= t,
            Budget::Steps(s) => steps_done >= s,
        }
    }
}

/// Which update the switching subgradient method took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Objective,
    Constraint,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Objective => "objective",
            Branch::Constraint => "constraint",
        }
    }
}

/// One row per outer iterate; row 0 is the initial point.
#[derive(Debug, Clone)]
pub struct TraceRecord<T> {
    pub t: usize,
    /// Gradient steps spent producing this iterate (`k_t`).
    pub inner_steps: usize,
    /// Accumulated gradient steps up to and including this iterate.
    pub cum_oracle: u64,
    pub inner_converged: bool,
    pub objective: T,
    pub infeasibility: T,
    pub stationarity: Option<T>,
    pub comp_slack: Option<T>,
    pub lambda_norm: Option<T>,
    pub max_constraint: T,
    pub branch: Option<Branch>,
    /// Tolerance or switching threshold used by the iteration that produced this row.
    pub eps: Option<T>,
    pub x: Vec<T>,
    pub lambda: Vec<T>,
    pub z: Option<Vec<T>>,
    pub wall_ms: f64,
}

impl<T: Scalar> TraceRecord<T> {
    /// `stat^2 + infeas^2 + cs^2`, when multipliers are available.
    pub fn combined_sq(&self) -> Option<T> {
        let (s, c) = (self.stationarity?, self.comp_slack?);
        Some(s * s + self.infeasibility * self.infeasibility + c * c)
    }

    /// `stat + infeas + cs`, the tuning score of primal-dual methods.
    pub fn residual_sum(&self) -> Option<T> {
        Some(self.stationarity? + self.infeasibility + self.comp_slack?)
    }
}

/// Bookkeeping fields of a row; residuals are filled in by [`make_record`].
#[derive(Debug, Clone, Default)]
pub(crate) struct RowInfo<T> {
    pub t: usize,
    pub inner_steps: usize,
    pub cum_oracle: u64,
    pub inner_converged: bool,
    pub eps: Option<T>,
    pub branch: Option<Branch>,
    pub z: Option<Vec<T>>,
    pub wall_ms: f64,
}

/// Builds a trace row at `x`. Residual evaluations are not charged to any
/// counter. Without multipliers only objective and infeasibility are filled.
pub(crate) fn make_record<T: Scalar>(
    instance: &ProblemInstance<T>,
    x: Vec<T>,
    lambda: Option<Vec<T>>,
    info: RowInfo<T>,
) -> Result<TraceRecord<T>> {
    let ev = instance.evaluate_uncounted(&x)?;
    let g = &ev.g_vals;
    let max_constraint = g.iter().copied().fold(T::neg_infinity(), T::max);
    let objective = ev.f_val;
    let (stationarity, comp_slack, infeasibility, lambda_norm, lambda) = match lambda {
        Some(l) => {
            if l.iter().any(|&v| !(v >= T::zero())) {
                return Err(Error::Input("multipliers must be non-negative".into()));
            }
            let r = residuals_from_evaluation(instance, &x, &l, &ev, T::lit(DEFAULT_ACTIVE_TOL))?;
            (Some(r.stationarity), Some(r.comp_slack), r.infeasibility, Some(norm(&l)), l)
        }
        None => (None, None, pos_norm(g), None, Vec::new()),
    };
    Ok(TraceRecord {
        t: info.t,
        inner_steps: info.inner_steps,
        cum_oracle: info.cum_oracle,
        inner_converged: info.inner_converged,
        objective,
        infeasibility,
        stationarity,
        comp_slack,
        lambda_norm,
        max_constraint,
        branch: info.branch,
        eps: info.eps,
        x,
        lambda,
        z: info.z,
        wall_ms: info.wall_ms,
    })
}

#[derive(Debug, Clone)]
pub struct SolverTrace<T> {
    pub method: Method,
    pub records: Vec<TraceRecord<T>>,
    pub counter: OracleCounter,
    pub stopped_early: bool,
    /// Outer iterations whose inner solve ran out of steps.
    pub inner_failures: usize,
}

impl<T: Scalar> SolverTrace<T> {
    pub fn new(method: Method) -> Self {
        Self { method, records: Vec::new(), counter: OracleCounter::new(), stopped_early: false, inner_failures: 0 }
    }

    pub fn last(&self) -> Option<&TraceRecord<T>> {
        self.records.last()
    }

    /// Number of outer iterations performed (rows minus the initial point).
    pub fn outer_iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn total_steps(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cum_oracle)
    }

    pub fn max_lambda_norm(&self) -> T {
        self.records
            .iter()
            .filter_map(|r| r.lambda_norm)
            .fold(T::zero(), T::max)
    }
}
