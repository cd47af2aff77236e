//! Query-counting oracles and the extended-oracle index sets.
//!
//! Every access to a potential or a matrix goes through one of the oracle
//! types here, which count queries exactly and optionally keep a log of
//! (query, response) records.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, LabError, Result};
use crate::linalg::{check_symmetric, cholesky_lower};

/// Default cap on stored query records.
pub const DEFAULT_LOG_CAP: usize = 1_000_000;

/// A potential `V` with gradient, on `R^d`.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.value(x), self.gradient(x))
    }
}

impl<T: Potential + ?Sized> Potential for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).gradient(x)
    }
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (**self).value_grad(x)
    }
}

/// `V(x) = ½ xᵀΛx`.
#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    lambda: DMatrix<f64>,
}

impl QuadraticPotential {
    pub fn new(lambda: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&lambda)?;
        cholesky_lower(&lambda, 0.0)?;
        Ok(QuadraticPotential { lambda })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.lambda
    }
}

impl Potential for QuadraticPotential {
    fn dim(&self) -> usize {
        self.lambda.nrows()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut s = 0.0;
        for j in 0..d {
            let mut row = 0.0;
            for i in 0..d {
                row += self.lambda[(i, j)] * x[i];
            }
            s += row * x[j];
        }
        0.5 * s
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.lambda * DVector::from_column_slice(x);
        v.as_slice().to_vec()
    }
}

/// One stored query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord<R> {
    pub index: usize,
    pub point: Vec<f64>,
    pub response: R,
}

/// Ordered record of queries, capped at a maximum length.
#[derive(Debug, Clone)]
pub struct QueryLog<R> {
    records: Vec<QueryRecord<R>>,
    cap: usize,
}

impl<R> QueryLog<R> {
    pub fn new(cap: usize) -> Self {
        QueryLog { records: Vec::new(), cap }
    }

    fn push(&mut self, index: usize, point: &[f64], response: impl FnOnce() -> R) {
        if self.records.len() < self.cap {
            self.records.push(QueryRecord { index, point: point.to_vec(), response: response() });
        }
    }

    pub fn records(&self) -> &[QueryRecord<R>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }
}

/// Response of a first-order query.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderResponse {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Counting access to `(V(x), ∇V(x))`.
pub struct FirstOrderOracle<'a> {
    potential: Box<dyn Potential + 'a>,
    count: usize,
    log: QueryLog<FirstOrderResponse>,
}

impl<'a> FirstOrderOracle<'a> {
    pub fn new(potential: impl Potential + 'a) -> Self {
        FirstOrderOracle {
            potential: Box::new(potential),
            count: 0,
            log: QueryLog::new(DEFAULT_LOG_CAP),
        }
    }

    /// Disables record keeping; the counter still runs.
    pub fn without_log(mut self) -> Self {
        self.log = QueryLog::new(0);
        self
    }

    pub fn with_log_cap(mut self, cap: usize) -> Self {
        self.log = QueryLog::new(cap);
        self
    }

    pub fn dimension(&self) -> usize {
        self.potential.dim()
    }

    pub fn query_count(&self) -> usize {
        self.count
    }

    pub fn log(&self) -> &QueryLog<FirstOrderResponse> {
        &self.log
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(LabError::DimensionMismatch { expected: self.dimension(), got: x.len() });
        }
        Ok(())
    }

    /// One first-order query.
    pub fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(x)?;
        let (v, g) = self.potential.value_grad(x);
        self.log.push(self.count, x, || FirstOrderResponse { value: v, gradient: g.clone() });
        self.count += 1;
        Ok((v, g))
    }

    /// One first-order query of which only the value is used.
    pub fn evaluate_value(&mut self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let v = self.potential.value(x);
        if self.log.cap() > self.log.len() {
            let g = self.potential.gradient(x);
            self.log.push(self.count, x, || FirstOrderResponse { value: v, gradient: g });
        }
        self.count += 1;
        Ok(v)
    }
}

/// Quadratic first-order oracle for `½ xᵀΛx`.
pub fn make_quadratic_oracle(lambda: &DMatrix<f64>) -> Result<FirstOrderOracle<'static>> {
    Ok(FirstOrderOracle::new(QuadraticPotential::new(lambda.clone())?))
}

/// A symmetric linear map accessed through products.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }
}

/// Diagonal operator stored by its diagonal.
#[derive(Debug, Clone)]
pub struct Diagonal(pub DVector<f64>);

impl LinearOperator for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.0.component_mul(v)
    }
}

/// Counting access to `v ↦ Λv`.
pub struct MatVecOracle<'a> {
    op: Box<dyn LinearOperator + 'a>,
    count: usize,
    log: QueryLog<Vec<f64>>,
}

impl<'a> MatVecOracle<'a> {
    pub fn new(op: impl LinearOperator + 'a) -> Self {
        MatVecOracle { op: Box::new(op), count: 0, log: QueryLog::new(DEFAULT_LOG_CAP) }
    }

    pub fn without_log(mut self) -> Self {
        self.log = QueryLog::new(0);
        self
    }

    pub fn dimension(&self) -> usize {
        self.op.dim()
    }

    pub fn query_count(&self) -> usize {
        self.count
    }

    pub fn log(&self) -> &QueryLog<Vec<f64>> {
        &self.log
    }

    pub fn query(&mut self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dimension() {
            return Err(LabError::DimensionMismatch { expected: self.dimension(), got: v.len() });
        }
        let w = self.op.apply(v);
        self.log.push(self.count, v.as_slice(), || w.as_slice().to_vec());
        self.count += 1;
        Ok(w)
    }
}

/// The extended-oracle index set `H_k = {(i,j) : i + j ≤ k + 1, i ≥ 0, 1 ≤ j ≤ k}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedIndexSet {
    pub k: usize,
    /// Pairs `(i, j)` sorted by `i + j`, then by `j`.
    pub pairs: Vec<(usize, usize)>,
}

impl ExtendedIndexSet {
    pub fn contains(&self, pair: (usize, usize)) -> bool {
        in_extended_set(self.k, pair)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Position of a pair in the enumeration order.
    pub fn position(&self, pair: (usize, usize)) -> Option<usize> {
        self.pairs.iter().position(|&p| p == pair)
    }
}

/// Membership predicate of `H_k` (`H_0` is empty).
pub fn in_extended_set(k: usize, (i, j): (usize, usize)) -> bool {
    j >= 1 && j <= k && i + j <= k + 1
}

pub fn extended_index_set(k: usize) -> Result<ExtendedIndexSet> {
    if k == 0 {
        return invalid("extended index set needs k >= 1");
    }
    let mut pairs = Vec::with_capacity(k * (k + 3) / 2);
    for s in 1..=(k + 1) {
        for j in 1..=s.min(k) {
            pairs.push((s - j, j));
        }
    }
    Ok(ExtendedIndexSet { k, pairs })
}

/// Pairs of `H_k` not in `H_{k-1}`, in enumeration order.
pub fn new_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for s in 1..=(k + 1) {
        for j in 1..=s.min(k) {
            let p = (s - j, j);
            if !in_extended_set(k - 1, p) {
                out.push(p);
            }
        }
    }
    out
}

/// First `m` pairs of the ordering `v_1, Λv_1, v_2, Λ²v_1, Λv_2, v_3, …`.
pub fn enumeration_order(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(m);
    let mut s = 1;
    while out.len() < m {
        for j in 1..=s {
            if out.len() == m {
                break;
            }
            out.push((s - j, j));
        }
        s += 1;
    }
    out
}
