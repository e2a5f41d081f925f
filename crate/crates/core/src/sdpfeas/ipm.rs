//! Primal-dual path-following method (NT direction, Mehrotra corrector).
//!
//! The margin problem is cast in standard dual form
//!
//! ```text
//! max  b·y   s.t.  Z = C − Σ y_i A_i ⪰ 0
//! ```
//!
//! with `y = (x̃, t)`, `b = e_t`, one SDP block per constraint
//! (`C = F0`, `A_k = −s_k F_k`, `A_t = I`) and two LP entries per scalar
//! for the box `|x̃_k| ≤ R`. The primal multiplier `X` yields the upper
//! bound used for infeasibility certificates.
//!
//! Scalars that occur in a single SDP block are eliminated block by block
//! before the (dense) Schur complement of the remaining ones is factored.

use super::dense;
use super::{classify, FeasibilityOutcome, FeasibilitySolver, SolveOptions, Status};
use crate::lmi::CompiledFeasibility;
use crate::matcore::{self, Matrix};

#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPointSolver;

impl FeasibilitySolver for InteriorPointSolver {
    fn solve(&self, compiled: &CompiledFeasibility, opts: &SolveOptions) -> FeasibilityOutcome {
        if let Err(e) = opts.validate(compiled.num_scalars) {
            return inconclusive(format!("invalid options: {e}"));
        }
        if compiled.blocks.is_empty() {
            return inconclusive("problem has no constraint blocks".into());
        }
        let prob = Problem::new(compiled, opts);
        prob.run(compiled, opts)
    }
}

fn inconclusive(msg: String) -> FeasibilityOutcome {
    FeasibilityOutcome {
        status: Status::Inconclusive,
        assignment: None,
        margin: f64::NEG_INFINITY,
        upper_bound: f64::INFINITY,
        iterations: 0,
        converged: false,
        diagnostic: Some(msg),
    }
}

type Entries = Vec<(usize, usize, f64)>;

const EXTRA_ITERATIONS: usize = 30;
const RESTORE_PASSES: usize = 20;

struct Block {
    d: usize,
    c: Matrix,
    /// y-indices touching the block: private ones first, then global ones.
    vars: Vec<usize>,
    n_private: usize,
    /// `A` entries (lower triangle) per local variable.
    entries: Vec<Entries>,
    /// Lower-triangle position index.
    pos: Vec<usize>,
}

struct Problem {
    m: usize,
    radius: f64,
    scale: Vec<f64>,
    blocks: Vec<Block>,
    /// y-index → global position, `usize::MAX` for private scalars.
    gidx: Vec<usize>,
    globals: Vec<usize>,
}

struct State {
    x: Vec<Matrix>,
    z: Vec<Matrix>,
    xu: Vec<f64>,
    xl: Vec<f64>,
    zu: Vec<f64>,
    zl: Vec<f64>,
    y: Vec<f64>,
}

struct Nt {
    g: Matrix,
    ginv: Matrix,
    w: Matrix,
    lam: Vec<f64>,
}

struct BlockFactor {
    l: Matrix,
    v: Matrix,
}

struct Factor {
    global: Matrix,
    blocks: Vec<BlockFactor>,
    regularized: bool,
}

struct Dir {
    dx: Vec<Matrix>,
    dz: Vec<Matrix>,
    dxu: Vec<f64>,
    dxl: Vec<f64>,
    dzu: Vec<f64>,
    dzl: Vec<f64>,
    dy: Vec<f64>,
}

struct Residuals {
    rp: Vec<f64>,
    rd: Vec<Matrix>,
    rdu: Vec<f64>,
    rdl: Vec<f64>,
}

fn inner(entries: &Entries, x: &Matrix) -> f64 {
    entries
        .iter()
        .map(|&(r, c, v)| if r == c { v * x[(r, c)] } else { 2.0 * v * x[(r, c)] })
        .sum()
}

fn add_entries(m: &mut Matrix, entries: &Entries, coef: f64) {
    for &(r, c, v) in entries {
        m[(r, c)] += coef * v;
        if r != c {
            m[(c, r)] += coef * v;
        }
    }
}

fn dot(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest step in (0, ∞] keeping `Λ + α·D̃` positive semidefinite, from the
/// scaled direction `D̃`.
fn max_step_scaled(lam: &[f64], d: &Matrix) -> f64 {
    let n = lam.len();
    let s = Matrix::from_fn(n, n, |i, j| d[(i, j)] / (lam[i] * lam[j]).sqrt());
    match matcore::sym_min_eigenvalue(&s) {
        Ok(e) if e < 0.0 => -1.0 / e,
        Ok(_) => f64::INFINITY,
        Err(_) => 0.0,
    }
}

fn max_step_lp(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

fn cholesky_regularized(a: &mut Matrix) -> Option<bool> {
    let orig = a.clone();
    if dense::cholesky_in_place(a).is_ok() {
        return Some(false);
    }
    let scale = (0..orig.nrows())
        .map(|i| orig[(i, i)].abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut delta = 1e-14;
    while delta <= 1e-6 {
        a.copy_from(&orig);
        for i in 0..a.nrows() {
            a[(i, i)] += delta * scale;
        }
        if dense::cholesky_in_place(a).is_ok() {
            return Some(true);
        }
        delta *= 100.0;
    }
    None
}

impl Problem {
    fn new(compiled: &CompiledFeasibility, opts: &SolveOptions) -> Self {
        let m = compiled.num_scalars;
        let scale = opts.scaling.clone().unwrap_or_else(|| vec![1.0; m]);
        let mut count = vec![0usize; m];
        for blk in &compiled.blocks {
            for (k, _) in &blk.coeffs {
                count[*k] += 1;
            }
        }
        let mut gidx = vec![usize::MAX; m + 1];
        let mut globals = Vec::new();
        for k in 0..=m {
            if k == m || count[k] != 1 {
                gidx[k] = globals.len();
                globals.push(k);
            }
        }
        let blocks = compiled
            .blocks
            .iter()
            .map(|blk| {
                let d = blk.dim;
                let mut private = Vec::new();
                let mut shared = Vec::new();
                for (k, e) in &blk.coeffs {
                    let ent: Entries = e.iter().map(|&(r, c, v)| (r, c, -scale[*k] * v)).collect();
                    if gidx[*k] == usize::MAX {
                        private.push((*k, ent));
                    } else {
                        shared.push((*k, ent));
                    }
                }
                shared.push((m, (0..d).map(|i| (i, i, 1.0)).collect()));
                let n_private = private.len();
                let (vars, entries): (Vec<_>, Vec<_>) = private.into_iter().chain(shared).unzip();
                let mut pos = vec![usize::MAX; d * d];
                let mut p = 0;
                for c in 0..d {
                    for r in c..d {
                        pos[r + c * d] = p;
                        p += 1;
                    }
                }
                Block {
                    d,
                    c: blk.f0.clone(),
                    vars,
                    n_private,
                    entries,
                    pos,
                }
            })
            .collect();
        Problem {
            m,
            radius: opts.trust_radius,
            scale,
            blocks,
            gidx,
            globals,
        }
    }

    fn n_total(&self) -> usize {
        self.blocks.iter().map(|b| b.d).sum::<usize>() + 2 * self.m
    }

    /// `A(X)` split into the SDP part and the full value.
    fn apply_a(&self, x: &[Matrix], xu: &[f64], xl: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut out = vec![0.0; self.m + 1];
        for (blk, xb) in self.blocks.iter().zip(x) {
            for (k, e) in blk.vars.iter().zip(&blk.entries) {
                out[*k] += inner(e, xb);
            }
        }
        let sdp = out.clone();
        for k in 0..self.m {
            out[k] += xu[k] - xl[k];
        }
        (sdp, out)
    }

    fn apply_at_block(&self, b: usize, y: &[f64]) -> Matrix {
        let blk = &self.blocks[b];
        let mut m = Matrix::zeros(blk.d, blk.d);
        for (k, e) in blk.vars.iter().zip(&blk.entries) {
            if y[*k] != 0.0 {
                add_entries(&mut m, e, y[*k]);
            }
        }
        m
    }

    fn initial_state(&self) -> State {
        let nb = self.blocks.len() as f64;
        let mut fmin = f64::INFINITY;
        let mut fnorm: f64 = 0.0;
        for blk in &self.blocks {
            fmin = fmin.min(matcore::sym_min_eigenvalue(&blk.c).unwrap_or(0.0));
            fnorm = fnorm.max(blk.c.amax() * blk.d as f64);
        }
        let theta = 1.0 + fnorm;
        let t0 = fmin - theta;
        let x: Vec<Matrix> = self
            .blocks
            .iter()
            .map(|b| Matrix::identity(b.d, b.d) / (nb * b.d as f64))
            .collect();
        let z: Vec<Matrix> = self
            .blocks
            .iter()
            .map(|b| &b.c - Matrix::identity(b.d, b.d) * t0)
            .collect();
        let mut y = vec![0.0; self.m + 1];
        y[self.m] = t0;
        let nsdp: usize = self.blocks.iter().map(|b| b.d).sum();
        let mu0 = x.iter().zip(&z).map(|(a, b)| dot(a, b)).sum::<f64>() / nsdp as f64;
        let xl0 = mu0 / self.radius;
        State {
            x,
            z,
            xu: vec![xl0; self.m],
            xl: vec![xl0; self.m],
            zu: vec![self.radius; self.m],
            zl: vec![self.radius; self.m],
            y,
        }
    }

    fn residuals(&self, st: &State) -> (Residuals, Vec<f64>) {
        let (sdp, ax) = self.apply_a(&st.x, &st.xu, &st.xl);
        let mut rp: Vec<f64> = ax.iter().map(|v| -v).collect();
        rp[self.m] += 1.0;
        let rd = (0..self.blocks.len())
            .map(|b| {
                let mut r = &self.blocks[b].c - &st.z[b] - self.apply_at_block(b, &st.y);
                symmetrize(&mut r);
                r
            })
            .collect();
        let rdu = (0..self.m).map(|k| self.radius - st.zu[k] - st.y[k]).collect();
        let rdl = (0..self.m).map(|k| self.radius - st.zl[k] + st.y[k]).collect();
        (Residuals { rp, rd, rdu, rdl }, sdp)
    }

    fn mu(&self, st: &State) -> f64 {
        let s: f64 = st.x.iter().zip(&st.z).map(|(a, b)| dot(a, b)).sum::<f64>()
            + st.xu.iter().zip(&st.zu).map(|(a, b)| a * b).sum::<f64>()
            + st.xl.iter().zip(&st.zl).map(|(a, b)| a * b).sum::<f64>();
        s / self.n_total() as f64
    }

    /// Upper bound on the margin implied by the SDP multiplier.
    fn bound(&self, x: &[Matrix], sdp: &[f64]) -> f64 {
        let tr: f64 = x.iter().map(|x| x.trace()).sum();
        if !(tr > 0.0) {
            return f64::INFINITY;
        }
        let cx: f64 = self.blocks.iter().zip(x).map(|(b, x)| dot(&b.c, x)).sum();
        let g: f64 = sdp[..self.m].iter().map(|v| v.abs()).sum();
        (cx + self.radius * g) / tr
    }

    /// Pulls the SDP multiplier back onto `⟨A_k, X⟩ = 0` along the NT
    /// metric and returns the bound of the corrected matrix if it is still
    /// positive semidefinite.
    fn restored_bound(&self, st: &State, nt: &[Nt], f: &Factor, sdp: &[f64]) -> Option<f64> {
        let mut x = st.x.clone();
        let mut g = sdp.to_vec();
        let norm = |g: &[f64]| g[..self.m].iter().map(|v| v.abs()).sum::<f64>();
        // iterative refinement, since the factor may be regularized; stops
        // once a pass stops shrinking the residual
        for _ in 0..RESTORE_PASSES {
            let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            rhs[self.m] = 0.0;
            let c = self.solve_normal(f, &rhs);
            let mut next = x.clone();
            for (b, n) in nt.iter().enumerate() {
                let mut d = &n.w * self.apply_at_block(b, &c) * &n.w;
                symmetrize(&mut d);
                next[b] += d;
            }
            let gn = self.apply_a(&next, &vec![0.0; self.m], &vec![0.0; self.m]).0;
            let (before, after) = (norm(&g), norm(&gn));
            if after < before {
                x = next;
                g = gn;
            }
            if !(after < 0.9 * before) {
                break;
            }
        }
        for xb in &x {
            if matcore::sym_min_eigenvalue(xb).ok()? < 0.0 {
                return None;
            }
        }
        Some(self.bound(&x, &g))
    }

    fn nt_scaling(&self, st: &State) -> Option<Vec<Nt>> {
        st.x.iter()
            .zip(&st.z)
            .map(|(x, z)| {
                let lx = x.clone().cholesky()?.l();
                let lz = z.clone().cholesky()?.l();
                let svd = (lz.transpose() * &lx).svd(true, true);
                let u = svd.u?;
                let vt = svd.v_t?;
                let lam: Vec<f64> = svd.singular_values.iter().copied().collect();
                if lam.iter().any(|v| !(*v > 0.0)) {
                    return None;
                }
                let n = lam.len();
                let mut g = lx * vt.transpose();
                let mut ginv = u.transpose() * lz.transpose();
                for i in 0..n {
                    let s = lam[i].sqrt();
                    for r in 0..n {
                        g[(r, i)] /= s;
                        ginv[(i, r)] /= s;
                    }
                }
                let mut w = &g * g.transpose();
                symmetrize(&mut w);
                Some(Nt { g, ginv, w, lam })
            })
            .collect()
    }

    /// Local Schur block `M_ij = ⟨A_i, W A_j W⟩` of one SDP block.
    fn local_schur(&self, blk: &Block, w: &Matrix) -> Matrix {
        let d = blk.d;
        let nl = blk.vars.len();
        let npos = d * (d + 1) / 2;
        let mut gall = vec![0.0; npos * nl];
        let mut gl = Matrix::zeros(d, d);
        for (l, e) in blk.entries.iter().enumerate() {
            gl.fill(0.0);
            if e.len() * 4 > d {
                let mut a = Matrix::zeros(d, d);
                add_entries(&mut a, e, 1.0);
                gl = w * a * w;
            } else {
                for &(r, c, v) in e {
                    let wr = w.column(r);
                    let wc = w.column(c);
                    if r == c {
                        for j in 0..d {
                            let s = v * wr[j];
                            for i in j..d {
                                gl[(i, j)] += s * wr[i];
                            }
                        }
                    } else {
                        for j in 0..d {
                            let sr = v * wr[j];
                            let sc = v * wc[j];
                            for i in j..d {
                                gl[(i, j)] += wc[i] * sr + wr[i] * sc;
                            }
                        }
                    }
                }
            }
            for c in 0..d {
                for r in c..d {
                    gall[blk.pos[r + c * d] * nl + l] = gl[(r, c)];
                }
            }
        }
        let mut ml = Matrix::zeros(nl, nl);
        for (i, e) in blk.entries.iter().enumerate() {
            for &(r, c, v) in e {
                let f = if r == c { v } else { 2.0 * v };
                let row = &gall[blk.pos[r + c * d] * nl..][..nl];
                for (l, g) in row.iter().enumerate() {
                    ml[(i, l)] += f * g;
                }
            }
        }
        symmetrize(&mut ml);
        ml
    }

    fn factor(&self, st: &State, nt: &[Nt]) -> Option<Factor> {
        let ng = self.globals.len();
        let mut global = Matrix::zeros(ng, ng);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut regularized = false;
        let lp = |k: usize| {
            if k < self.m {
                st.xu[k] / st.zu[k] + st.xl[k] / st.zl[k]
            } else {
                0.0
            }
        };
        for (blk, n) in self.blocks.iter().zip(nt) {
            let ml = self.local_schur(blk, &n.w);
            let p = blk.n_private;
            let nl = blk.vars.len();
            let gl = nl - p;
            let mut red = ml.view((p, p), (gl, gl)).into_owned();
            let mut l = Matrix::zeros(p, p);
            let mut v = Matrix::zeros(p, gl);
            if p > 0 {
                l = ml.view((0, 0), (p, p)).into_owned();
                for i in 0..p {
                    l[(i, i)] += lp(blk.vars[i]);
                }
                regularized |= cholesky_regularized(&mut l)?;
                v = ml.view((0, p), (p, gl)).into_owned();
                dense::solve_lower_in_place(&l, &mut v);
                dense::sub_gram(&mut red, &v);
            }
            for j in 0..gl {
                let gj = self.gidx[blk.vars[p + j]];
                for i in 0..gl {
                    global[(self.gidx[blk.vars[p + i]], gj)] += red[(i, j)];
                }
            }
            blocks.push(BlockFactor { l, v });
        }
        for (g, &k) in self.globals.iter().enumerate() {
            global[(g, g)] += lp(k);
        }
        regularized |= cholesky_regularized(&mut global)?;
        Some(Factor {
            global,
            blocks,
            regularized,
        })
    }

    fn solve_normal(&self, f: &Factor, h: &[f64]) -> Vec<f64> {
        let mut hg: Vec<f64> = self.globals.iter().map(|&k| h[k]).collect();
        let mut ws = Vec::with_capacity(self.blocks.len());
        for (blk, bf) in self.blocks.iter().zip(&f.blocks) {
            let p = blk.n_private;
            let mut w: Vec<f64> = blk.vars[..p].iter().map(|&k| h[k]).collect();
            if p > 0 {
                dense::solve_lower_vec(&bf.l, &mut w);
                let mut t = vec![0.0; blk.vars.len() - p];
                dense::sub_transpose_mul(&mut t, &bf.v, &w);
                for (j, tv) in t.iter().enumerate() {
                    hg[self.gidx[blk.vars[p + j]]] += tv;
                }
            }
            ws.push(w);
        }
        dense::solve_lower_vec(&f.global, &mut hg);
        dense::solve_lower_transpose_vec(&f.global, &mut hg);
        let mut dy = vec![0.0; self.m + 1];
        for (g, &k) in self.globals.iter().enumerate() {
            dy[k] = hg[g];
        }
        for ((blk, bf), mut w) in self.blocks.iter().zip(&f.blocks).zip(ws) {
            let p = blk.n_private;
            if p == 0 {
                continue;
            }
            let yg: Vec<f64> = blk.vars[p..].iter().map(|&k| dy[k]).collect();
            dense::sub_mul(&mut w, &bf.v, &yg);
            dense::solve_lower_transpose_vec(&bf.l, &mut w);
            for (i, &k) in blk.vars[..p].iter().enumerate() {
                dy[k] = w[i];
            }
        }
        dy
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        st: &State,
        nt: &[Nt],
        f: &Factor,
        res: &Residuals,
        rc: &[Matrix],
        rcu: &[f64],
        rcl: &[f64],
    ) -> Dir {
        let mut rx = Vec::with_capacity(self.blocks.len());
        let mut q = Vec::with_capacity(self.blocks.len());
        for (b, n) in nt.iter().enumerate() {
            let d = n.lam.len();
            let u = Matrix::from_fn(d, d, |i, j| 2.0 * rc[b][(i, j)] / (n.lam[i] + n.lam[j]));
            let mut r = &n.g * u * n.g.transpose();
            symmetrize(&mut r);
            let qb = &r - &n.w * &res.rd[b] * &n.w;
            rx.push(r);
            q.push(qb);
        }
        let rxu: Vec<f64> = (0..self.m).map(|k| rcu[k] / st.zu[k]).collect();
        let rxl: Vec<f64> = (0..self.m).map(|k| rcl[k] / st.zl[k]).collect();
        let qu: Vec<f64> = (0..self.m)
            .map(|k| rxu[k] - st.xu[k] / st.zu[k] * res.rdu[k])
            .collect();
        let ql: Vec<f64> = (0..self.m)
            .map(|k| rxl[k] - st.xl[k] / st.zl[k] * res.rdl[k])
            .collect();
        let (_, aq) = self.apply_a(&q, &qu, &ql);
        let h: Vec<f64> = res.rp.iter().zip(&aq).map(|(a, b)| a - b).collect();
        let dy = self.solve_normal(f, &h);
        let mut dx = Vec::with_capacity(self.blocks.len());
        let mut dz = Vec::with_capacity(self.blocks.len());
        for (b, n) in nt.iter().enumerate() {
            let mut zb = &res.rd[b] - self.apply_at_block(b, &dy);
            symmetrize(&mut zb);
            let mut xb = &rx[b] - &n.w * &zb * &n.w;
            symmetrize(&mut xb);
            dx.push(xb);
            dz.push(zb);
        }
        let dzu: Vec<f64> = (0..self.m).map(|k| res.rdu[k] - dy[k]).collect();
        let dzl: Vec<f64> = (0..self.m).map(|k| res.rdl[k] + dy[k]).collect();
        let dxu = (0..self.m)
            .map(|k| rxu[k] - st.xu[k] / st.zu[k] * dzu[k])
            .collect();
        let dxl = (0..self.m)
            .map(|k| rxl[k] - st.xl[k] / st.zl[k] * dzl[k])
            .collect();
        Dir {
            dx,
            dz,
            dxu,
            dxl,
            dzu,
            dzl,
            dy,
        }
    }

    /// Scaled directions `G⁻¹ΔX G⁻ᵀ` and `GᵀΔZ G`.
    fn scaled(nt: &[Nt], dir: &Dir) -> (Vec<Matrix>, Vec<Matrix>) {
        let sx = nt
            .iter()
            .zip(&dir.dx)
            .map(|(n, d)| &n.ginv * d * n.ginv.transpose())
            .collect();
        let sz = nt
            .iter()
            .zip(&dir.dz)
            .map(|(n, d)| n.g.transpose() * d * &n.g)
            .collect();
        (sx, sz)
    }

    fn steps(st: &State, nt: &[Nt], dir: &Dir, sx: &[Matrix], sz: &[Matrix]) -> (f64, f64) {
        let mut ap = max_step_lp(&st.xu, &dir.dxu).min(max_step_lp(&st.xl, &dir.dxl));
        let mut ad = max_step_lp(&st.zu, &dir.dzu).min(max_step_lp(&st.zl, &dir.dzl));
        for (b, n) in nt.iter().enumerate() {
            ap = ap.min(max_step_scaled(&n.lam, &sx[b]));
            ad = ad.min(max_step_scaled(&n.lam, &sz[b]));
        }
        (ap, ad)
    }

    fn run(&self, compiled: &CompiledFeasibility, opts: &SolveOptions) -> FeasibilityOutcome {
        let mut st = self.initial_state();
        let m = self.m;
        let n_total = self.n_total() as f64;
        let mut best_bound = f64::INFINITY;
        let mut best_x: Option<Vec<f64>> = None;
        let mut diagnostic = None;
        let mut converged = false;
        let mut iterations = 0;
        let cnorm = 1.0
            + self
                .blocks
                .iter()
                .map(|b| b.c.norm_squared())
                .sum::<f64>()
                .sqrt();
        let mut regularized = false;
        let mut done_at: Option<usize> = None;

        for it in 0..opts.max_iterations {
            iterations = it;
            let (res, sdp) = self.residuals(&st);
            let bound = self.bound(&st.x, &sdp);
            if bound < best_bound {
                best_bound = bound;
            }
            if best_bound < 0.0 {
                break;
            }
            let t = st.y[m];
            if t > opts.eps_feas {
                let x: Vec<f64> = (0..m).map(|k| self.scale[k] * st.y[k]).collect();
                if let Ok(margins) = super::verify_assignment(compiled, &x) {
                    if margins.iter().all(|v| *v > opts.eps_feas) {
                        best_x = Some(x);
                        if opts.stop_at_feasible {
                            converged = true;
                            break;
                        }
                    }
                }
            }
            let mu = self.mu(&st);
            let pobj: f64 = self.blocks.iter().zip(&st.x).map(|(b, x)| dot(&b.c, x)).sum::<f64>()
                + self.radius * (st.xu.iter().sum::<f64>() + st.xl.iter().sum::<f64>());
            let pinf = res.rp.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dinf = res.rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / cnorm;
            let gap = (pobj - t).abs() / (1.0 + pobj.abs() + t.abs());
            let done = gap < opts.tol && pinf < opts.tol && dinf < opts.tol;
            if !(mu > 1e-300) || !mu.is_finite() {
                diagnostic = Some("complementarity underflow".into());
                break;
            }

            let Some(nt) = self.nt_scaling(&st) else {
                diagnostic = Some(format!("lost positive definiteness at iteration {it}"));
                break;
            };
            let Some(fac) = self.factor(&st, &nt) else {
                diagnostic = Some(format!("normal equations singular at iteration {it}"));
                break;
            };
            regularized |= fac.regularized;
            if let Some(rb) = self.restored_bound(&st, &nt, &fac, &sdp) {
                best_bound = best_bound.min(rb);
                if best_bound < 0.0 {
                    break;
                }
            }
            // At the tolerance an undecided verdict (margin near zero, bound
            // still above it because `R` amplifies the residuals) gets a few
            // more iterations to drive the residuals down.
            if done {
                converged = true;
                let undecided = best_x.is_none() && best_bound >= 0.0;
                let first = *done_at.get_or_insert(it);
                if !undecided || it >= first + EXTRA_ITERATIONS {
                    break;
                }
            }

            // predictor
            let rc: Vec<Matrix> = nt
                .iter()
                .map(|n| Matrix::from_diagonal(&nalgebra::DVector::from_iterator(n.lam.len(), n.lam.iter().map(|l| -l * l))))
                .collect();
            let rcu: Vec<f64> = (0..m).map(|k| -st.xu[k] * st.zu[k]).collect();
            let rcl: Vec<f64> = (0..m).map(|k| -st.xl[k] * st.zl[k]).collect();
            let pred = self.direction(&st, &nt, &fac, &res, &rc, &rcu, &rcl);
            let (sx, sz) = Self::scaled(&nt, &pred);
            let (ap, ad) = Self::steps(&st, &nt, &pred, &sx, &sz);
            let (ap1, ad1) = (ap.min(1.0), ad.min(1.0));
            let mut mu_aff = 0.0;
            for b in 0..self.blocks.len() {
                let xa = &st.x[b] + &pred.dx[b] * ap1;
                let za = &st.z[b] + &pred.dz[b] * ad1;
                mu_aff += dot(&xa, &za);
            }
            for k in 0..m {
                mu_aff += (st.xu[k] + ap1 * pred.dxu[k]) * (st.zu[k] + ad1 * pred.dzu[k]);
                mu_aff += (st.xl[k] + ap1 * pred.dxl[k]) * (st.zl[k] + ad1 * pred.dzl[k]);
            }
            mu_aff /= n_total;
            let expon = (3.0 * ap1.min(ad1).powi(2)).max(1.0);
            let sigma = (mu_aff / mu).max(0.0).powf(expon).min(1.0);

            // corrector
            let rc: Vec<Matrix> = nt
                .iter()
                .enumerate()
                .map(|(b, n)| {
                    let d = n.lam.len();
                    let p = &sx[b] * &sz[b];
                    Matrix::from_fn(d, d, |i, j| {
                        let base = if i == j { sigma * mu - n.lam[i] * n.lam[i] } else { 0.0 };
                        base - 0.5 * (p[(i, j)] + p[(j, i)])
                    })
                })
                .collect();
            let rcu: Vec<f64> = (0..m)
                .map(|k| sigma * mu - st.xu[k] * st.zu[k] - pred.dxu[k] * pred.dzu[k])
                .collect();
            let rcl: Vec<f64> = (0..m)
                .map(|k| sigma * mu - st.xl[k] * st.zl[k] - pred.dxl[k] * pred.dzl[k])
                .collect();
            let corr = self.direction(&st, &nt, &fac, &res, &rc, &rcu, &rcl);
            let (sx, sz) = Self::scaled(&nt, &corr);
            let (ap, ad) = Self::steps(&st, &nt, &corr, &sx, &sz);
            let tau = 0.9 + 0.09 * ap1.min(ad1);
            let ap = (tau * ap).min(1.0);
            let ad = (tau * ad).min(1.0);
            if ap < 1e-12 && ad < 1e-12 {
                diagnostic = Some(format!("step lengths collapsed at iteration {it}"));
                break;
            }
            for b in 0..self.blocks.len() {
                st.x[b] += &corr.dx[b] * ap;
                st.z[b] += &corr.dz[b] * ad;
                symmetrize(&mut st.x[b]);
                symmetrize(&mut st.z[b]);
            }
            for k in 0..m {
                st.xu[k] += ap * corr.dxu[k];
                st.xl[k] += ap * corr.dxl[k];
                st.zu[k] += ad * corr.dzu[k];
                st.zl[k] += ad * corr.dzl[k];
            }
            for (y, d) in st.y.iter_mut().zip(&corr.dy) {
                *y += ad * d;
            }
            iterations = it + 1;
        }

        let last: Vec<f64> = (0..m).map(|k| self.scale[k] * st.y[k]).collect();
        best_x = match best_x {
            None => Some(last),
            Some(kept) => {
                let worst = |x: &[f64]| {
                    super::verify_assignment(compiled, x)
                        .map(|v| v.into_iter().fold(f64::INFINITY, f64::min))
                        .unwrap_or(f64::NEG_INFINITY)
                };
                Some(if worst(&last) >= worst(&kept) { last } else { kept })
            }
        };
        if iterations >= opts.max_iterations && diagnostic.is_none() {
            diagnostic = Some(format!("iteration limit {} reached", opts.max_iterations));
        }
        if regularized {
            let note = "normal equations were regularized";
            diagnostic = Some(match diagnostic {
                Some(d) => format!("{d}; {note}"),
                None => note.into(),
            });
        }
        classify(
            compiled,
            opts,
            best_x,
            st.y[m],
            best_bound,
            iterations,
            converged,
            diagnostic,
        )
    }
}
