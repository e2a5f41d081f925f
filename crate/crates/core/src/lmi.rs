//! Decision variables, affine symmetric block expressions and their
//! compilation to `F(x) = F0 + Σ x_k F_k`.
//!
//! An [`AffineExpr`] is assembled by symbolic placement: a product such as
//! `A_i X_i` is expanded component by component into explicit coefficients
//! and dropped into a block position of a larger symmetric matrix. Only the
//! lower triangle of each coefficient matrix is stored; a coefficient `c` at
//! `(r, c)` with `r > c` stands for the symmetric pair of entries.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcore::{Matrix, SymMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("variable label {0:?} already declared")]
    DuplicateLabel(String),
    #[error("variable dimensions must be at least 1")]
    EmptyVariable,
    #[error("unknown variable id {0}")]
    UnknownVar(usize),
    #[error("strictness margin must be finite and non-negative, got {0}")]
    BadMargin(f64),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },
    #[error("diagonal block term must be symmetric")]
    NotSymmetric,
    #[error("problem has no constraints")]
    Empty,
    #[error("assignment has length {got}, expected {expected}")]
    AssignmentLength { expected: usize, got: usize },
    #[error("non-finite coefficient")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, LmiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Symmetric(usize),
    Rectangular(usize, usize),
}

impl VarKind {
    pub fn num_scalars(&self) -> usize {
        match *self {
            VarKind::Symmetric(n) => n * (n + 1) / 2,
            VarKind::Rectangular(m, n) => m * n,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match *self {
            VarKind::Symmetric(n) => (n, n),
            VarKind::Rectangular(m, n) => (m, n),
        }
    }

    /// Matrix entries touched by scalar component `k`, each with value 1.
    ///
    /// Symmetric components run over the lower triangle column by column;
    /// rectangular components are column-major.
    fn unit(&self, k: usize) -> Vec<(usize, usize)> {
        match *self {
            VarKind::Symmetric(n) => {
                let (i, j) = sym_component(n, k);
                if i == j {
                    vec![(i, i)]
                } else {
                    vec![(i, j), (j, i)]
                }
            }
            VarKind::Rectangular(m, _) => vec![(k % m, k / m)],
        }
    }

    /// Rebuilds the matrix value of a variable from its scalar components.
    pub fn assemble(&self, comps: &[f64]) -> Matrix {
        let (r, c) = self.shape();
        let mut m = Matrix::zeros(r, c);
        for (k, &v) in comps.iter().enumerate() {
            for (i, j) in self.unit(k) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// `(row, col)` of lower-triangle component `k` of an `n x n` symmetric matrix.
fn sym_component(n: usize, mut k: usize) -> (usize, usize) {
    let mut j = 0;
    while k >= n - j {
        k -= n - j;
        j += 1;
    }
    (j + k, j)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVar {
    pub id: VarId,
    pub kind: VarKind,
    pub label: String,
}

/// Symmetric matrix affine in the decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    block_sizes: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
    constant: Matrix,
    /// var → (component, row, col) → coefficient, lower triangle only.
    terms: BTreeMap<VarId, BTreeMap<(usize, usize, usize), f64>>,
    kinds: BTreeMap<VarId, VarKind>,
}

impl AffineExpr {
    /// Zero expression partitioned into diagonal blocks of the given sizes.
    pub fn blocks(block_sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(block_sizes.len());
        let mut dim = 0;
        for &s in block_sizes {
            offsets.push(dim);
            dim += s;
        }
        AffineExpr {
            block_sizes: block_sizes.to_vec(),
            offsets,
            dim,
            constant: Matrix::zeros(dim, dim),
            terms: BTreeMap::new(),
            kinds: BTreeMap::new(),
        }
    }

    /// Single-block expression of dimension `n`.
    pub fn new(n: usize) -> Self {
        Self::blocks(&[n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant(&self) -> &Matrix {
        &self.constant
    }

    pub fn variables(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.keys().copied()
    }

    fn block_check(&self, r: usize, c: usize, rows: usize, cols: usize) -> Result<()> {
        let nb = self.block_sizes.len();
        for (idx, ctx) in [(r, "block row"), (c, "block column")] {
            if idx >= nb {
                return Err(LmiError::Dimension {
                    context: ctx.into(),
                    expected: nb,
                    got: idx,
                });
            }
        }
        if self.block_sizes[r] != rows {
            return Err(LmiError::Dimension {
                context: format!("rows of block ({r},{c})"),
                expected: self.block_sizes[r],
                got: rows,
            });
        }
        if self.block_sizes[c] != cols {
            return Err(LmiError::Dimension {
                context: format!("columns of block ({r},{c})"),
                expected: self.block_sizes[c],
                got: cols,
            });
        }
        Ok(())
    }

    /// Adds a constant matrix at block `(r, c)`, `r >= c`, mirrored above the
    /// diagonal. Diagonal blocks require a symmetric matrix.
    pub fn add_constant(mut self, r: usize, c: usize, m: &Matrix) -> Result<Self> {
        let (r, c, m) = if r >= c {
            (r, c, m.clone())
        } else {
            (c, r, m.transpose())
        };
        self.block_check(r, c, m.nrows(), m.ncols())?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(LmiError::NonFinite);
        }
        if r == c && (&m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
            return Err(LmiError::NotSymmetric);
        }
        let (or, oc) = (self.offsets[r], self.offsets[c]);
        for p in 0..m.nrows() {
            for q in 0..m.ncols() {
                let v = if r == c {
                    0.5 * (m[(p, q)] + m[(q, p)])
                } else {
                    m[(p, q)]
                };
                self.constant[(or + p, oc + q)] += v;
                if r != c {
                    self.constant[(oc + q, or + p)] += v;
                }
            }
        }
        Ok(self)
    }

    /// Adds `coef · L · V · R` (or `coef · L · Vᵀ · R`) at block `(r, c)`.
    /// On a diagonal block (`r == c`) the symmetric part `He(·)` is added.
    /// `None` stands for an identity factor.
    #[allow(clippy::too_many_arguments)]
    pub fn add_product(
        self,
        r: usize,
        c: usize,
        coef: f64,
        left: Option<&Matrix>,
        var: &DecisionVar,
        transpose: bool,
        right: Option<&Matrix>,
    ) -> Result<Self> {
        let (vr, vc) = var.kind.shape();
        let (vr, vc) = if transpose { (vc, vr) } else { (vr, vc) };
        let (rows, inner_l) = left.map_or((vr, vr), |l| (l.nrows(), l.ncols()));
        let (inner_r, cols) = right.map_or((vc, vc), |m| (m.nrows(), m.ncols()));
        if inner_l != vr {
            return Err(LmiError::Dimension {
                context: format!("left factor of {}", var.label),
                expected: vr,
                got: inner_l,
            });
        }
        if inner_r != vc {
            return Err(LmiError::Dimension {
                context: format!("right factor of {}", var.label),
                expected: vc,
                got: inner_r,
            });
        }
        if r < c {
            // Place the transpose below the diagonal instead.
            let lt = right.map(|m| m.transpose());
            let rt = left.map(|m| m.transpose());
            return self.add_product(c, r, coef, lt.as_ref(), var, !transpose, rt.as_ref());
        }
        self.block_check(r, c, rows, cols)?;
        let diag = r == c;
        self.place(r, c, var, |unit| {
            // T = coef · L · U(ᵀ) · R
            let mut t = Matrix::zeros(rows, cols);
            for &(a, b) in unit {
                let (a, b) = if transpose { (b, a) } else { (a, b) };
                for p in 0..rows {
                    let lp = left.map_or(if p == a { 1.0 } else { 0.0 }, |l| l[(p, a)]);
                    if lp == 0.0 {
                        continue;
                    }
                    for q in 0..cols {
                        let rq = right.map_or(if q == b { 1.0 } else { 0.0 }, |m| m[(b, q)]);
                        t[(p, q)] += coef * lp * rq;
                    }
                }
            }
            if diag {
                &t + t.transpose()
            } else {
                t
            }
        })
    }

    /// Adds `coef · L · S · Lᵀ` (`coef · S` when `left` is `None`) on diagonal
    /// block `r` for a symmetric variable `S`.
    pub fn add_congruence(
        self,
        r: usize,
        coef: f64,
        left: Option<&Matrix>,
        var: &DecisionVar,
    ) -> Result<Self> {
        let n = match var.kind {
            VarKind::Symmetric(n) => n,
            VarKind::Rectangular(..) => return Err(LmiError::NotSymmetric),
        };
        let rows = left.map_or(n, |l| l.nrows());
        if let Some(l) = left {
            if l.ncols() != n {
                return Err(LmiError::Dimension {
                    context: format!("congruence factor of {}", var.label),
                    expected: n,
                    got: l.ncols(),
                });
            }
        }
        self.block_check(r, r, rows, rows)?;
        self.place(r, r, var, |unit| {
            let mut t = Matrix::zeros(rows, rows);
            for &(a, b) in unit {
                for p in 0..rows {
                    let lp = left.map_or(if p == a { 1.0 } else { 0.0 }, |l| l[(p, a)]);
                    if lp == 0.0 {
                        continue;
                    }
                    for q in 0..rows {
                        let lq = left.map_or(if q == b { 1.0 } else { 0.0 }, |l| l[(q, b)]);
                        t[(p, q)] += coef * lp * lq;
                    }
                }
            }
            t
        })
    }

    fn place<F>(mut self, r: usize, c: usize, var: &DecisionVar, term: F) -> Result<Self>
    where
        F: Fn(&[(usize, usize)]) -> Matrix,
    {
        if var.kind.num_scalars() == 0 {
            return Err(LmiError::EmptyVariable);
        }
        if let Some(k) = self.kinds.get(&var.id) {
            if *k != var.kind {
                return Err(LmiError::UnknownVar(var.id.0));
            }
        }
        self.kinds.insert(var.id, var.kind);
        let (or, oc) = (self.offsets[r], self.offsets[c]);
        let entry = self.terms.entry(var.id).or_default();
        for k in 0..var.kind.num_scalars() {
            let t = term(&var.kind.unit(k));
            for p in 0..t.nrows() {
                for q in 0..t.ncols() {
                    let (row, col) = (or + p, oc + q);
                    if row < col {
                        continue;
                    }
                    let v = t[(p, q)];
                    if v == 0.0 {
                        continue;
                    }
                    if !v.is_finite() {
                        return Err(LmiError::NonFinite);
                    }
                    *entry.entry((k, row, col)).or_insert(0.0) += v;
                }
            }
        }
        entry.retain(|_, v| *v != 0.0);
        Ok(self)
    }

    /// Value of the expression for the given per-variable component slices.
    pub fn evaluate<'a, F>(&self, value_of: F) -> Matrix
    where
        F: Fn(VarId) -> &'a [f64],
    {
        let mut m = self.constant.clone();
        for (id, coeffs) in &self.terms {
            let x = value_of(*id);
            for (&(k, row, col), &v) in coeffs {
                m[(row, col)] += v * x[k];
                if row != col {
                    m[(col, row)] += v * x[k];
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub expr: AffineExpr,
    pub eps: f64,
}

/// Decision variables plus constraints `expr − ε·I ⪰ 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LmiProblem {
    vars: Vec<DecisionVar>,
    labels: HashSet<String>,
    constraints: Vec<Constraint>,
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, kind: VarKind, label: impl Into<String>) -> Result<DecisionVar> {
        let label = label.into();
        let (r, c) = kind.shape();
        if r == 0 || c == 0 {
            return Err(LmiError::EmptyVariable);
        }
        if !self.labels.insert(label.clone()) {
            return Err(LmiError::DuplicateLabel(label));
        }
        let var = DecisionVar {
            id: VarId(self.vars.len()),
            kind,
            label,
        };
        self.vars.push(var.clone());
        Ok(var)
    }

    pub fn add_constraint(
        &mut self,
        expr: AffineExpr,
        eps: f64,
        label: impl Into<String>,
    ) -> Result<()> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(LmiError::BadMargin(eps));
        }
        if expr.dim == 0 {
            return Err(LmiError::Dimension {
                context: "constraint".into(),
                expected: 1,
                got: 0,
            });
        }
        for (id, kind) in &expr.kinds {
            match self.vars.get(id.0) {
                Some(v) if v.kind == *kind => {}
                _ => return Err(LmiError::UnknownVar(id.0)),
            }
        }
        self.constraints.push(Constraint {
            label: label.into(),
            expr,
            eps,
        });
        Ok(())
    }

    pub fn vars(&self) -> &[DecisionVar] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn num_scalars(&self) -> usize {
        self.vars.iter().map(|v| v.kind.num_scalars()).sum()
    }

    /// Constraint `idx` evaluated at a flat assignment, without the ε shift.
    pub fn evaluate_constraint(&self, idx: usize, x: &[f64]) -> Result<Matrix> {
        let offsets = self.offsets();
        let n = self.num_scalars();
        if x.len() != n {
            return Err(LmiError::AssignmentLength {
                expected: n,
                got: x.len(),
            });
        }
        let c = &self.constraints[idx];
        Ok(c.expr.evaluate(|id| {
            let o = offsets[id.0];
            &x[o..o + self.vars[id.0].kind.num_scalars()]
        }))
    }

    fn offsets(&self) -> Vec<usize> {
        let mut o = Vec::with_capacity(self.vars.len());
        let mut acc = 0;
        for v in &self.vars {
            o.push(acc);
            acc += v.kind.num_scalars();
        }
        o
    }

    pub fn compile(&self) -> Result<CompiledFeasibility> {
        if self.constraints.is_empty() {
            return Err(LmiError::Empty);
        }
        let offsets = self.offsets();
        let mut index = Vec::with_capacity(self.num_scalars());
        for v in &self.vars {
            for k in 0..v.kind.num_scalars() {
                index.push((v.id, k));
            }
        }
        let blocks = self
            .constraints
            .iter()
            .map(|c| {
                let d = c.expr.dim;
                let mut f0 = c.expr.constant.clone();
                for i in 0..d {
                    f0[(i, i)] -= c.eps;
                }
                let mut per_scalar: BTreeMap<usize, Vec<(usize, usize, f64)>> = BTreeMap::new();
                for (id, coeffs) in &c.expr.terms {
                    for (&(k, row, col), &v) in coeffs {
                        per_scalar
                            .entry(offsets[id.0] + k)
                            .or_default()
                            .push((row, col, v));
                    }
                }
                CompiledBlock {
                    label: c.label.clone(),
                    dim: d,
                    eps: c.eps,
                    f0,
                    coeffs: per_scalar.into_iter().collect(),
                }
            })
            .collect();
        Ok(CompiledFeasibility {
            num_scalars: index.len(),
            blocks,
            index,
            vars: self.vars.clone(),
            var_offsets: offsets,
        })
    }
}

/// One constraint block of `F(x) = F0 + Σ x_k F_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledBlock {
    pub label: String,
    pub dim: usize,
    pub eps: f64,
    /// Constant part, already shifted by `−ε·I`.
    pub f0: Matrix,
    /// `(scalar index, lower-triangle entries (row, col, coeff))`, sorted by index.
    pub coeffs: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

impl CompiledBlock {
    pub fn evaluate(&self, x: &[f64]) -> Matrix {
        let mut m = self.f0.clone();
        for (k, entries) in &self.coeffs {
            let xk = x[*k];
            if xk == 0.0 {
                continue;
            }
            for &(r, c, v) in entries {
                m[(r, c)] += v * xk;
                if r != c {
                    m[(c, r)] += v * xk;
                }
            }
        }
        m
    }
}

/// Standard-form data for the feasibility solver.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledFeasibility {
    pub num_scalars: usize,
    pub blocks: Vec<CompiledBlock>,
    /// Scalar index → (variable, component).
    pub index: Vec<(VarId, usize)>,
    pub vars: Vec<DecisionVar>,
    pub var_offsets: Vec<usize>,
}

impl CompiledFeasibility {
    pub fn check_assignment(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.num_scalars {
            return Err(LmiError::AssignmentLength {
                expected: self.num_scalars,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `F(x)` block by block.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<Matrix>> {
        self.check_assignment(x)?;
        Ok(self.blocks.iter().map(|b| b.evaluate(x)).collect())
    }

    /// Matrix value of one decision variable.
    pub fn var_value(&self, id: VarId, x: &[f64]) -> Result<Matrix> {
        self.check_assignment(x)?;
        let var = self.vars.get(id.0).ok_or(LmiError::UnknownVar(id.0))?;
        let o = self.var_offsets[id.0];
        Ok(var.kind.assemble(&x[o..o + var.kind.num_scalars()]))
    }

    pub fn sym_value(&self, id: VarId, x: &[f64]) -> Result<SymMatrix> {
        SymMatrix::new(self.var_value(id, x)?).map_err(|_| LmiError::NonFinite)
    }

    /// Text dump, one line per nonzero:
    /// `constraint_label row col var_label component coeff`.
    /// Constant entries use the variable label `const` and component `-`.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            for j in 0..b.dim {
                for i in j..b.dim {
                    let v = b.f0[(i, j)];
                    if v != 0.0 {
                        let _ = writeln!(out, "{} {} {} const - {:e}", b.label, i, j, v);
                    }
                }
            }
            for (k, entries) in &b.coeffs {
                let (id, comp) = self.index[*k];
                for &(r, c, v) in entries {
                    let _ = writeln!(
                        out,
                        "{} {} {} {} {} {:e}",
                        b.label, r, c, self.vars[id.0].label, comp, v
                    );
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn declare_counts_components() {
        let mut p = LmiProblem::new();
        p.declare(VarKind::Symmetric(4), "P_1").unwrap();
        assert_eq!(p.num_scalars(), 10);
        p.declare(VarKind::Rectangular(4, 1), "Y_1").unwrap();
        assert_eq!(p.num_scalars(), 14);
        p.declare(VarKind::Symmetric(1), "s").unwrap();
        assert_eq!(p.num_scalars(), 15);
        assert_eq!(
            p.declare(VarKind::Symmetric(2), "P_1"),
            Err(LmiError::DuplicateLabel("P_1".into()))
        );
        assert_eq!(
            p.declare(VarKind::Rectangular(0, 2), "E"),
            Err(LmiError::EmptyVariable)
        );
    }

    #[test]
    fn sym_component_order() {
        let order: Vec<_> = (0..6).map(|k| sym_component(3, k)).collect();
        assert_eq!(order, vec![(0, 0), (1, 0), (2, 0), (1, 1), (2, 1), (2, 2)]);
    }

    #[test]
    fn scalar_constraint_compiles() {
        let mut p = LmiProblem::new();
        let v = p.declare(VarKind::Symmetric(1), "P").unwrap();
        let e = AffineExpr::new(1)
            .add_congruence(0, 1.0, None, &v)
            .unwrap();
        p.add_constraint(e, 1e-6, "pos").unwrap();
        let c = p.compile().unwrap();
        assert_eq!(c.num_scalars, 1);
        assert_relative_eq!(c.blocks[0].f0[(0, 0)], -1e-6);
        assert_eq!(c.blocks[0].coeffs, vec![(0, vec![(0, 0, 1.0)])]);
    }

    #[test]
    fn two_constraints_stack() {
        let mut p = LmiProblem::new();
        let v = p.declare(VarKind::Symmetric(2), "S").unwrap();
        for l in ["a", "b"] {
            let e = AffineExpr::new(2).add_congruence(0, 1.0, None, &v).unwrap();
            p.add_constraint(e, 0.0, l).unwrap();
        }
        let c = p.compile().unwrap();
        let total: usize = c.blocks.iter().map(|b| b.dim).sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn empty_and_bad_margin_rejected() {
        let mut p = LmiProblem::new();
        assert_eq!(p.compile(), Err(LmiError::Empty));
        let e = AffineExpr::new(1);
        assert_eq!(p.add_constraint(e, -1.0, "x"), Err(LmiError::BadMargin(-1.0)));
    }

    #[test]
    fn unknown_variable_rejected() {
        let mut other = LmiProblem::new();
        let stray = other.declare(VarKind::Symmetric(1), "Q").unwrap();
        let mut p = LmiProblem::new();
        let e = AffineExpr::new(1)
            .add_congruence(0, 1.0, None, &stray)
            .unwrap();
        assert_eq!(p.add_constraint(e, 0.0, "x"), Err(LmiError::UnknownVar(0)));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut p = LmiProblem::new();
        let x = p.declare(VarKind::Rectangular(2, 2), "X").unwrap();
        let a = Matrix::identity(3, 3);
        let r = AffineExpr::blocks(&[2, 2]).add_product(1, 0, 1.0, Some(&a), &x, false, None);
        assert!(matches!(r, Err(LmiError::Dimension { .. })));
    }

    #[test]
    fn block_product_matches_direct_evaluation() {
        // [[X + Xᵀ - S, *], [A X, S]] at a concrete point
        let mut p = LmiProblem::new();
        let s = p.declare(VarKind::Symmetric(2), "S").unwrap();
        let x = p.declare(VarKind::Rectangular(2, 2), "X").unwrap();
        let a = Matrix::from_row_slice(2, 2, &[0.5, 1.0, -0.3, 0.2]);
        let e = AffineExpr::blocks(&[2, 2])
            .add_product(0, 0, 1.0, None, &x, false, None)
            .unwrap()
            .add_congruence(0, -1.0, None, &s)
            .unwrap()
            .add_product(1, 0, 1.0, Some(&a), &x, false, None)
            .unwrap()
            .add_congruence(1, 1.0, None, &s)
            .unwrap();
        p.add_constraint(e, 0.0, "blk").unwrap();
        let vals = [2.0, 0.1, 3.0, 1.0, 0.4, -0.2, 1.5];
        let c = p.compile().unwrap();
        let got = &c.evaluate(&vals).unwrap()[0];
        let sm = Matrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 3.0]);
        let xm = Matrix::from_row_slice(2, 2, &[1.0, -0.2, 0.4, 1.5]);
        let mut want = Matrix::zeros(4, 4);
        want.view_mut((0, 0), (2, 2))
            .copy_from(&(&xm + xm.transpose() - &sm));
        want.view_mut((2, 0), (2, 2)).copy_from(&(&a * &xm));
        want.view_mut((0, 2), (2, 2))
            .copy_from(&(&a * &xm).transpose());
        want.view_mut((2, 2), (2, 2)).copy_from(&sm);
        assert!((got - want).amax() < 1e-14);
    }

    #[test]
    fn upper_block_placement_is_transposed() {
        let mut p = LmiProblem::new();
        let y = p.declare(VarKind::Rectangular(1, 2), "Y").unwrap();
        let b = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
        // B Y placed at (0, 1) must equal (B Y)ᵀ at (1, 0)
        let upper = AffineExpr::blocks(&[2, 2])
            .add_product(0, 1, 1.0, Some(&b), &y, false, None)
            .unwrap();
        let lower = AffineExpr::blocks(&[2, 2])
            .add_product(1, 0, 1.0, None, &y, true, Some(&b.transpose()))
            .unwrap();
        let vals = [0.3, -0.7];
        let f = |_| &vals[..];
        assert!((upper.evaluate(f) - lower.evaluate(f)).amax() < 1e-15);
    }

    #[test]
    fn debug_dump_lists_nonzeros() {
        let mut p = LmiProblem::new();
        let v = p.declare(VarKind::Symmetric(1), "P").unwrap();
        let e = AffineExpr::new(1).add_congruence(0, 1.0, None, &v).unwrap();
        p.add_constraint(e, 1e-6, "pos").unwrap();
        let dump = p.compile().unwrap().debug_dump();
        assert_eq!(dump.lines().count(), 2);
        assert!(dump.contains("pos 0 0 P 0 1e0"));
    }
}
