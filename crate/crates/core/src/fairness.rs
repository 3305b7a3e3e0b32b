//! Fairness-constrained linear classification:
//!
//! ```text
//! min_x  R(x)^2 / 2   s.t.  Lg(x) <= Lg* + kappa,  ||x||_1 <= r
//! ```
//!
//! where `Lg` is the average logistic loss on the training data and
//! `R(x)` is the gap between the mean sigmoid scores of the protected and
//! unprotected groups on held-out data (a smooth demographic-parity surrogate).
//!
//! Data comes from libsvm text files or dense CSV files. Feature matrices are
//! stored row-compressed so sparse libsvm data stays cheap.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{FeasibleSet, DEFAULT_ACTIVE_TOL};
use crate::problem::{ProblemConstants, ProblemInstance, SmoothOracle};

/// Default l1 radius of the feasible set.
pub const DEFAULT_RADIUS: f64 = 100.0;
/// Relative slack: `kappa = 0.001 Lg*`.
pub const KAPPA_FRACTION: f64 = 1e-3;
/// Step size and stationarity target of the projected gradient run computing `Lg*`.
pub const LSTAR_STEP: f64 = 0.1;
pub const LSTAR_TOL: f64 = 1e-3;
pub const LSTAR_MAX_ITERS: usize = 1_000_000;

/// Row-compressed feature matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Features {
    pub dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Features {
    pub fn new(dim: usize) -> Self {
        Self { dim, indptr: vec![0], indices: Vec::new(), values: Vec::new() }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        let mut f = Self::new(dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::Dimension { expected: dim, got: r.len() });
            }
            f.push_row(r.iter().copied().enumerate().filter(|(_, v)| *v != 0.0))?;
        }
        Ok(f)
    }

    /// Appends a row given as `(column, value)` pairs.
    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<()> {
        for (j, v) in entries {
            if j >= self.dim {
                return Err(Error::Dimension { expected: self.dim, got: j + 1 });
            }
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite feature value {v}")));
            }
            self.indices.push(j);
            self.values.push(v);
        }
        self.indptr.push(self.indices.len());
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let (idx, val) = self.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            out[j] += v;
        }
        out
    }

    pub fn dot(&self, i: usize, x: &[f64]) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&j, &v)| v * x[j]).sum()
    }

    /// `out += alpha * a_i`
    pub fn axpy(&self, i: usize, alpha: f64, out: &mut [f64]) {
        let (idx, val) = self.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            out[j] += alpha * v;
        }
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        let (idx, val) = self.row(i);
        // Duplicate column entries are summed, as in `dense_row`.
        if idx.windows(2).all(|w| w[0] < w[1]) {
            val.iter().map(|v| v * v).sum()
        } else {
            self.dense_row(i).iter().map(|v| v * v).sum()
        }
    }

    /// Rows `rows` in the given order, with column `drop` removed (if any).
    pub fn select(&self, rows: &[usize], drop: Option<usize>) -> Features {
        let dim = if drop.is_some() { self.dim - 1 } else { self.dim };
        let mut out = Features::new(dim);
        for &i in rows {
            let (idx, val) = self.row(i);
            let entries = idx.iter().zip(val).filter_map(|(&j, &v)| match drop {
                Some(d) if j == d => None,
                Some(d) if j > d => Some((j - 1, v)),
                _ => Some((j, v)),
            });
            out.push_row(entries).expect("columns stay in range");
        }
        out
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).filter(|(&c, _)| c == j).map(|(_, &v)| v).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Features,
    /// `+1` or `-1`.
    pub labels: Vec<f64>,
    /// Feature column holding the binary group variable.
    pub group_column: Option<usize>,
}

impl Dataset {
    pub fn new(features: Features, labels: Vec<f64>, group_column: Option<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension { expected: features.rows(), got: labels.len() });
        }
        if labels.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(Error::Data("labels must be +1 or -1".into()));
        }
        if let Some(g) = group_column {
            if g >= features.dim {
                return Err(Error::Data(format!("group column {g} out of range for {} features", features.dim)));
            }
        }
        Ok(Self { features, labels, group_column })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim
    }

    pub fn with_group(mut self, group: usize) -> Result<Self> {
        if group >= self.dim() {
            return Err(Error::Data(format!("group column {group} out of range for {} features", self.dim())));
        }
        self.group_column = Some(group);
        Ok(self)
    }
}

fn parse_label(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("invalid label '{tok}'") })?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == -1.0 || v == 0.0 {
        Ok(-1.0)
    } else {
        Err(Error::Data(format!("line {line}: label {v} is not binary")))
    }
}

/// Parses libsvm text (`label idx:val ...`, 1-based indices). Labels `0`
/// are mapped to `-1`; feature `k` of the file becomes column `k - 1`.
pub fn parse_libsvm<R: Read>(reader: R) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0usize;
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let label = parse_label(toks.next().expect("non-empty line"), line_no)?;
        let mut row = Vec::new();
        for tok in toks {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| Error::Parse { line: line_no, msg: format!("expected idx:val, got '{tok}'") })?;
            let i: usize = i
                .parse()
                .map_err(|_| Error::Parse { line: line_no, msg: format!("invalid index '{i}'") })?;
            if i == 0 {
                return Err(Error::Parse { line: line_no, msg: "feature indices are 1-based".into() });
            }
            let v: f64 = v
                .parse()
                .map_err(|_| Error::Parse { line: line_no, msg: format!("invalid value '{v}'") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line: line_no, msg: format!("non-finite value '{v}'") });
            }
            dim = dim.max(i);
            row.push((i - 1, v));
        }
        rows.push(row);
        labels.push(label);
    }
    let mut features = Features::new(dim);
    for r in rows {
        features.push_row(r)?;
    }
    Dataset::new(features, labels, None)
}

pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_libsvm(File::open(path)?)
}

/// How the binary group variable is located.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupSpec {
    /// CSV header name.
    Name(String),
    /// 0-based feature column.
    Index(usize),
}

impl GroupSpec {
    /// Numbers select a column index, anything else a header name.
    pub fn parse(s: &str) -> Self {
        s.parse().map(GroupSpec::Index).unwrap_or_else(|_| GroupSpec::Name(s.to_string()))
    }
}

/// Parses dense CSV with a header. The column named `label` holds the class;
/// every other column is a feature. The group column is `group` unless
/// `group` selects another one.
pub fn parse_csv<R: Read>(reader: R, group: Option<&GroupSpec>) -> Result<Dataset> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break l;
                }
            }
            None => return Err(Error::Data("empty CSV file".into())),
        }
    };
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let label_col = names
        .iter()
        .position(|n| n == "label")
        .ok_or_else(|| Error::Data("CSV header has no 'label' column".into()))?;
    let feature_names: Vec<&String> = names.iter().enumerate().filter(|(i, _)| *i != label_col).map(|(_, n)| n).collect();
    let group_column = match group {
        Some(GroupSpec::Name(n)) => Some(
            feature_names
                .iter()
                .position(|f| *f == n)
                .ok_or_else(|| Error::Data(format!("CSV header has no '{n}' column")))?,
        ),
        Some(GroupSpec::Index(i)) => Some(*i),
        None => feature_names.iter().position(|f| f.as_str() == "group"),
    };
    let mut features = Features::new(feature_names.len());
    let mut labels = Vec::new();
    for (k, line) in lines {
        let line_no = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != names.len() {
            return Err(Error::Parse { line: line_no, msg: format!("expected {} cells, got {}", names.len(), cells.len()) });
        }
        labels.push(parse_label(cells[label_col], line_no)?);
        let mut row = Vec::new();
        for (j, cell) in cells.iter().enumerate().filter(|(j, _)| *j != label_col) {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Parse { line: line_no, msg: format!("invalid number '{cell}'") })?;
            if v != 0.0 {
                row.push((if j > label_col { j - 1 } else { j }, v));
            }
        }
        features.push_row(row).map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
    }
    Dataset::new(features, labels, group_column)
}

pub fn load_csv(path: impl AsRef<Path>, group: Option<&GroupSpec>) -> Result<Dataset> {
    parse_csv(File::open(path)?, group)
}

/// Training data for the loss constraint and held-out rows split by group.
#[derive(Debug, Clone)]
pub struct FairnessSplit {
    pub train: Dataset,
    pub protected: Features,
    pub unprotected: Features,
}

impl FairnessSplit {
    pub fn dim(&self) -> usize {
        self.train.dim()
    }
}

/// Shuffles rows with `seed`, keeps the first `floor(2n/3)` for training and
/// splits the rest by the group column (value `> 0` is protected). The group
/// column is removed from every feature matrix.
pub fn split_fairness(data: &Dataset, seed: u64) -> Result<FairnessSplit> {
    split_fairness_with(data, seed, false)
}

pub fn split_fairness_with(data: &Dataset, seed: u64, keep_group: bool) -> Result<FairnessSplit> {
    let g = data
        .group_column
        .ok_or_else(|| Error::Data("a group column is required for the fairness split".into()))?;
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = 2 * n / 3;
    let (train_rows, held_out) = order.split_at(n_train);
    let (prot, unprot): (Vec<usize>, Vec<usize>) = held_out.iter().partition(|&&i| data.features.value(i, g) > 0.0);
    if prot.is_empty() || unprot.is_empty() {
        return Err(Error::Data(format!(
            "held-out rows must contain both groups (protected {}, unprotected {})",
            prot.len(),
            unprot.len()
        )));
    }
    let drop = (!keep_group).then_some(g);
    let train = Dataset {
        features: data.features.select(train_rows, drop),
        labels: train_rows.iter().map(|&i| data.labels[i]).collect(),
        group_column: if keep_group { Some(g) } else { None },
    };
    Ok(FairnessSplit {
        train,
        protected: data.features.select(&prot, drop),
        unprotected: data.features.select(&unprot, drop),
    })
}

/// `log(1 + exp(-z))` without overflow.
pub fn logistic(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Derivative of [`logistic`]: `-1 / (1 + exp(z))`.
pub fn logistic_prime(z: f64) -> f64 {
    -sigmoid(-z)
}

/// `exp(z) / (1 + exp(z))` without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Average logistic loss without the gradient.
pub fn logistic_value(x: &[f64], data: &Dataset) -> f64 {
    let n = data.len().max(1) as f64;
    data.labels.iter().enumerate().map(|(i, &b)| logistic(b * data.features.dot(i, x))).sum::<f64>() / n
}

/// Average logistic loss `(1/n) sum_i log(1 + exp(-b_i x^T a_i))` and its gradient.
pub fn logistic_loss(x: &[f64], data: &Dataset) -> (f64, Vec<f64>) {
    let n = data.len().max(1) as f64;
    let mut val = 0.0;
    let mut grad = vec![0.0; x.len()];
    for (i, &b) in data.labels.iter().enumerate() {
        let z = b * data.features.dot(i, x);
        val += logistic(z);
        data.features.axpy(i, logistic_prime(z) * b / n, &mut grad);
    }
    (val / n, grad)
}

fn group_mean_sigmoid(x: &[f64], rows: &Features, grad: &mut [f64], sign: f64) -> f64 {
    let n = rows.rows() as f64;
    let mut acc = 0.0;
    for i in 0..rows.rows() {
        let s = sigmoid(rows.dot(i, x));
        acc += s;
        rows.axpy(i, sign * s * (1.0 - s) / n, grad);
    }
    acc / n
}

/// `R(x) = mean_p sigmoid(x^T a) - mean_u sigmoid(x^T a)` and its gradient.
pub fn dp_gap(x: &[f64], split: &FairnessSplit) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; x.len()];
    let p = group_mean_sigmoid(x, &split.protected, &mut grad, 1.0);
    let u = group_mean_sigmoid(x, &split.unprotected, &mut grad, -1.0);
    (p - u, grad)
}

/// `(R^2 / 2, R grad R)`
pub fn dp_objective(x: &[f64], split: &FairnessSplit) -> (f64, Vec<f64>) {
    let (r, mut g) = dp_gap(x, split);
    for gi in &mut g {
        *gi *= r;
    }
    (0.5 * r * r, g)
}

/// Objective oracle `R^2 / 2`.
#[derive(Debug, Clone)]
pub struct DpObjective {
    pub split: Arc<FairnessSplit>,
}

impl SmoothOracle<f64> for DpObjective {
    fn dim(&self) -> usize {
        self.split.dim()
    }

    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        dp_objective(x, &self.split)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mean = |f: &Features| (0..f.rows()).map(|i| sigmoid(f.dot(i, x))).sum::<f64>() / f.rows() as f64;
        let r = mean(&self.split.protected) - mean(&self.split.unprotected);
        0.5 * r * r
    }
}

/// Constraint oracle `(Lg(x) - lstar) - kappa`.
#[derive(Debug, Clone)]
pub struct LossConstraint {
    pub data: Arc<Dataset>,
    pub lstar: f64,
    pub kappa: f64,
}

impl SmoothOracle<f64> for LossConstraint {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (v, g) = logistic_loss(x, &self.data);
        ((v - self.lstar) - self.kappa, g)
    }

    fn value(&self, x: &[f64]) -> f64 {
        (logistic_value(x, &self.data) - self.lstar) - self.kappa
    }
}

/// Average logistic loss as an oracle.
#[derive(Debug, Clone)]
pub struct LogisticLoss {
    pub data: Arc<Dataset>,
}

impl SmoothOracle<f64> for LogisticLoss {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        logistic_loss(x, &self.data)
    }

    fn value(&self, x: &[f64]) -> f64 {
        logistic_value(x, &self.data)
    }
}

/// Rounds up to the next value of the form `{1, 2.5, 5} x 10^k`.
pub fn round_up_smoothness(v: f64) -> f64 {
    if !(v > 0.0) {
        return 1.0;
    }
    let mut k = v.log10().floor() as i32 - 1;
    loop {
        let base = 10f64.powi(k);
        for m in [1.0, 2.5, 5.0] {
            let c = m * base;
            if c >= v * (1.0 - 1e-12) {
                return c;
            }
        }
        k += 1;
    }
}

/// Data-dependent constants of the benchmark problem.
#[derive(Debug, Clone, Serialize)]
pub struct FairnessConstants {
    /// Lipschitz constant of `R`.
    pub alpha: f64,
    /// Smoothness constant of `R`.
    pub beta: f64,
    /// Lipschitz constant of `Lg`.
    pub gamma: f64,
    /// Smoothness constant of `Lg`.
    pub gamma_prime: f64,
    /// `max(beta + alpha^2, gamma')`.
    pub smoothness_estimate: f64,
    /// `L` used by the solvers (the estimate rounded up, or an override).
    pub smoothness: f64,
    pub radius: f64,
    pub lstar: f64,
    pub x_feas: Vec<f64>,
    /// Stationarity residual certified at `x_feas`.
    pub lstar_residual: f64,
    pub lstar_iterations: usize,
    pub kappa: f64,
    pub objective_grad_bound: f64,
    pub constraint_bound: f64,
    pub diameter: f64,
}

/// `(alpha, beta, gamma, gamma')` from the row norms.
pub fn lipschitz_sums(split: &FairnessSplit) -> Result<(f64, f64, f64, f64)> {
    let (np, nu, n) = (split.protected.rows(), split.unprotected.rows(), split.train.len());
    if np == 0 || nu == 0 || n == 0 {
        return Err(Error::Data("constants need non-empty protected, unprotected and training sets".into()));
    }
    let sums = |f: &Features| -> (f64, f64) {
        (0..f.rows()).fold((0.0, 0.0), |(a, b), i| {
            let sq = f.row_norm_sq(i);
            (a + sq.sqrt(), b + sq)
        })
    };
    let (p1, p2) = sums(&split.protected);
    let (u1, u2) = sums(&split.unprotected);
    let (t1, t2) = sums(&split.train.features);
    let alpha = p1 / (4.0 * np as f64) + u1 / (4.0 * nu as f64);
    let beta = p2 / (4.0 * np as f64) + u2 / (4.0 * nu as f64);
    Ok((alpha, beta, t1 / n as f64, t2 / (4.0 * n as f64)))
}

/// Projected gradient with step 0.1 from the origin on `Lg` over `set` until
/// `dist(-grad Lg(x), N_X(x)) <= 0.001`. Returns `(Lg*, x_feas, residual, iterations)`.
pub fn solve_lstar(data: &Dataset, set: &FeasibleSet<f64>) -> Result<(f64, Vec<f64>, f64, usize)> {
    solve_lstar_with(data, set, LSTAR_STEP, LSTAR_TOL, LSTAR_MAX_ITERS)
}

pub fn solve_lstar_with(
    data: &Dataset,
    set: &FeasibleSet<f64>,
    step: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(f64, Vec<f64>, f64, usize)> {
    let mut x = set.project(&vec![0.0; data.dim()]);
    for k in 0..=max_iters {
        let (val, grad) = logistic_loss(&x, data);
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let res = set.normal_cone_distance(&x, &neg, DEFAULT_ACTIVE_TOL)?;
        if res <= tol {
            return Ok((val, x, res, k));
        }
        let y: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - step * gi).collect();
        x = set.project(&y);
    }
    Err(Error::Budget(format!("loss minimization did not reach stationarity {tol} in {max_iters} steps")))
}

/// Computes every constant of the benchmark problem on an l1-ball of radius
/// `radius`. `smoothness_override` replaces the rounded estimate of `L`.
pub fn estimate_constants(split: &FairnessSplit, radius: f64, smoothness_override: Option<f64>) -> Result<FairnessConstants> {
    let (alpha, beta, gamma, gamma_prime) = lipschitz_sums(split)?;
    let smoothness_estimate = (beta + alpha * alpha).max(gamma_prime);
    let smoothness = match smoothness_override {
        Some(l) if l > 0.0 => l,
        Some(l) => return Err(Error::Config(format!("L override must be positive, got {l}"))),
        None => round_up_smoothness(smoothness_estimate),
    };
    let set = FeasibleSet::l1_ball(split.dim(), radius)?;
    let (lstar, x_feas, lstar_residual, lstar_iterations) = solve_lstar(&split.train, &set)?;
    let kappa = KAPPA_FRACTION * lstar;
    let diameter = 2.0 * radius;
    // Lg is convex, so its maximum over the ball sits at a vertex +-r e_j; its
    // minimum is at least lstar - residual * diameter.
    let mut vertex_max = f64::NEG_INFINITY;
    let mut v = vec![0.0; split.dim()];
    for j in 0..split.dim() {
        for s in [radius, -radius] {
            v[j] = s;
            vertex_max = vertex_max.max(logistic_value(&v, &split.train));
        }
        v[j] = 0.0;
    }
    let g_max = (vertex_max - lstar) - kappa;
    let g_min_abs = kappa + lstar_residual * diameter;
    Ok(FairnessConstants {
        alpha,
        beta,
        gamma,
        gamma_prime,
        smoothness_estimate,
        smoothness,
        radius,
        lstar,
        x_feas,
        lstar_residual,
        lstar_iterations,
        kappa,
        objective_grad_bound: alpha,
        constraint_bound: g_max.max(g_min_abs).max(gamma),
        diameter,
    })
}

/// `min R^2/2  s.t.  (Lg - lstar) - kappa <= 0` over the l1-ball.
pub fn build_fairness_problem(split: &FairnessSplit, constants: &FairnessConstants) -> Result<ProblemInstance<f64>> {
    let split = Arc::new(split.clone());
    let data = Arc::new(split.train.clone());
    let set = FeasibleSet::l1_ball(split.dim(), constants.radius)?;
    let objective = Arc::new(DpObjective { split });
    let constraint = Arc::new(LossConstraint { data, lstar: constants.lstar, kappa: constants.kappa });
    let pc = ProblemConstants::new(
        constants.smoothness,
        constants.objective_grad_bound,
        constants.constraint_bound,
        constants.diameter,
        constants.x_feas.clone(),
    )
    .with_lower_bound(0.0);
    let g_feas = constraint.value(&constants.x_feas);
    if !(g_feas < 0.0) {
        return Err(Error::Slater(format!("loss constraint at x_feas is {g_feas}; Lg* was computed too loosely")));
    }
    ProblemInstance::new(objective, vec![constraint], set, pc)
}

/// Everything needed to run the benchmark on one dataset.
#[derive(Debug, Clone)]
pub struct FairnessBenchmark {
    pub split: FairnessSplit,
    pub constants: FairnessConstants,
    pub instance: ProblemInstance<f64>,
}

pub fn prepare_benchmark(data: &Dataset, seed: u64, radius: f64, smoothness_override: Option<f64>) -> Result<FairnessBenchmark> {
    let split = split_fairness(data, seed)?;
    let constants = estimate_constants(&split, radius, smoothness_override)?;
    let instance = build_fairness_problem(&split, &constants)?;
    Ok(FairnessBenchmark { split, constants, instance })
}

/// Synthetic binary classification data with `d` model features and a
/// trailing binary group column (index `d`). Group membership shifts the
/// feature distribution, so an unconstrained classifier is unfair.
pub fn synthetic_dataset(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n < 3 || d == 0 {
        return Err(Error::Input("synthetic data needs n >= 3 and d >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 2.0 / (d as f64).sqrt();
    let mut w: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
    w[0] = 1.5;
    let mut features = Features::new(d + 1);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let group = rng.gen_bool(0.4);
        let mut row: Vec<f64> = (0..d).map(|_| scale * gaussian(&mut rng)).collect();
        if group {
            row[0] += 0.8 * scale;
            row[1 % d] += 0.4 * scale;
        }
        let margin: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / scale + 1.5 * gaussian(&mut rng);
        labels.push(if margin > 0.0 { 1.0 } else { -1.0 });
        row.push(if group { 1.0 } else { 0.0 });
        features.push_row(row.into_iter().enumerate().filter(|(_, v)| *v != 0.0))?;
    }
    Dataset::new(features, labels, Some(d))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
