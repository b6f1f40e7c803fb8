//! Newton-system solves for the interior-point method.
//!
//! The reduced matrix is `H = G' W^-2 G`. Every second-order cone block
//! contributes `(I + 4 (u'u) u u' - 2 u v' - 2 v u') / beta^2` with `u = J v`,
//! i.e. its rows' outer products plus a rank-2 term. Two factorizations:
//!
//! * dense: assemble `H` and take a Cholesky factor;
//! * grouped: with the variables partitioned, rows confined to one group go
//!   into a block-diagonal `D`, everything else into `U M U'`, and solves use
//!   the Woodbury identity with the capacitance `M^-1 + U' D^-1 U`.
//!
//! Both are wrapped in iterative refinement against the unreduced system; if
//! the grouped solve does not refine to full accuracy, a dense factor is built
//! on demand.

use std::cell::OnceCell;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use super::cone::{BlockScaling, Scaling};
use super::ipm::{axpy, dot, norm, ConeProgram, SparseRow};

enum HessianFactor {
    Dense(Cholesky<f64, Dyn>),
    Grouped(Grouped),
}

struct Grouped {
    /// Variables of each group and Cholesky factors of its diagonal block.
    members: Vec<Vec<usize>>,
    blocks: Vec<Cholesky<f64, Dyn>>,
    /// `D^-1 U` (n x r), `U'` (r x n) and the LU factor of the capacitance.
    dinv_u: DMatrix<f64>,
    ut: DMatrix<f64>,
    cap: LU<f64, Dyn, Dyn>,
}

impl HessianFactor {
    fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            HessianFactor::Dense(c) => c.solve(b),
            HessianFactor::Grouped(g) => g.solve(b),
        }
    }
}

impl Grouped {
    fn dinv(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for (vars, chol) in self.members.iter().zip(&self.blocks) {
            let local = b.select_rows(vars.iter());
            let sol = chol.solve(&local);
            for (r, &v) in vars.iter().enumerate() {
                out.row_mut(v).copy_from(&sol.row(r));
            }
        }
        out
    }

    fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self.dinv(b);
        let t = &self.ut * &y;
        let c = self.cap.solve(&t).unwrap_or_else(|| DMatrix::from_element(t.nrows(), t.ncols(), f64::NAN));
        y - &self.dinv_u * c
    }
}

/// Entries of the symmetric middle matrix `M` in `U M U'`.
enum MBlock {
    One(f64),
    /// `[[a, b], [b, 0]]` over two consecutive columns.
    Two(f64, f64),
}

/// `h += w * g g'` over the sparse row.
fn add_outer(h: &mut DMatrix<f64>, row: &SparseRow, w: f64) {
    for &(i, gi) in row {
        let wi = w * gi;
        for &(j, gj) in row {
            h[(i, j)] += wi * gj;
        }
    }
}

fn cholesky_regularized(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut delta = 1e-13 * scale;
    for _ in 0..6 {
        let mut r = m.clone();
        for i in 0..n {
            r[(i, i)] += delta;
        }
        if let Some(c) = Cholesky::new(r) {
            return Some(c);
        }
        delta *= 100.0;
    }
    None
}

/// `(row weight, rank-2 columns)` for every cone block.
struct Contributions {
    /// Per row of `G`: weight of its outer product.
    row_weight: Vec<f64>,
    /// `(G'u, G'v, a, b)` per second-order cone: `a x x' + b (x y' + y x')`.
    rank2: Vec<(Vec<f64>, Vec<f64>, f64, f64)>,
}

fn contributions(prog: &ConeProgram, scaling: &Scaling) -> Contributions {
    let n = prog.num_vars();
    let mut row_weight = vec![0.0; prog.num_rows()];
    let mut rank2 = Vec::new();
    for (c, blk) in prog.cones.iter().zip(&scaling.blocks) {
        let off = c.offset();
        match blk {
            BlockScaling::NonNeg { d } => {
                for (i, di) in d.iter().enumerate() {
                    row_weight[off + i] = 1.0 / (di * di);
                }
            }
            BlockScaling::Soc { beta, v } => {
                let w = 1.0 / (beta * beta);
                let mut gu = vec![0.0; n];
                let mut gv = vec![0.0; n];
                for (i, &vi) in v.iter().enumerate() {
                    row_weight[off + i] = w;
                    let ui = if i == 0 { vi } else { -vi };
                    for &(j, gij) in &prog.g[off + i] {
                        gu[j] += gij * ui;
                        gv[j] += gij * vi;
                    }
                }
                rank2.push((gu, gv, 4.0 * dot(v, v) * w, -2.0 * w));
            }
        }
    }
    Contributions { row_weight, rank2 }
}

fn dense_factor(prog: &ConeProgram, contrib: &Contributions) -> Result<HessianFactor, String> {
    let n = prog.num_vars();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for (row, &w) in prog.g.iter().zip(&contrib.row_weight) {
        add_outer(&mut h, row, w);
    }
    if !contrib.rank2.is_empty() {
        let r = contrib.rank2.len();
        let mut q = DMatrix::<f64>::zeros(n, 2 * r);
        let mut qm = DMatrix::<f64>::zeros(2 * r, n);
        for (idx, (gu, gv, a, b)) in contrib.rank2.iter().enumerate() {
            for j in 0..n {
                q[(j, 2 * idx)] = gu[j];
                q[(j, 2 * idx + 1)] = gv[j];
                qm[(2 * idx, j)] = a * gu[j] + b * gv[j];
                qm[(2 * idx + 1, j)] = b * gu[j];
            }
        }
        h.gemm(1.0, &q, &qm, 1.0);
    }
    let h = (&h + h.transpose()) * 0.5;
    cholesky_regularized(h).map(HessianFactor::Dense).ok_or_else(|| "reduced Hessian not positive definite".into())
}

fn grouped_factor(prog: &ConeProgram, groups: &[usize], contrib: &Contributions) -> Result<HessianFactor, String> {
    let n = prog.num_vars();
    let n_groups = groups.iter().copied().max().map_or(0, |g| g + 1);
    let mut members = vec![Vec::new(); n_groups];
    let mut local = vec![0usize; n];
    for (v, &g) in groups.iter().enumerate() {
        local[v] = members[g].len();
        members[g].push(v);
    }
    let mut d: Vec<DMatrix<f64>> = members.iter().map(|m| DMatrix::zeros(m.len(), m.len())).collect();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut mid: Vec<MBlock> = Vec::new();
    for (row, &w) in prog.g.iter().zip(&contrib.row_weight) {
        let Some(&(first, _)) = row.first() else { continue };
        let g = groups[first];
        if row.iter().all(|&(j, _)| groups[j] == g) {
            let blk = &mut d[g];
            for &(i, gi) in row {
                for &(j, gj) in row {
                    blk[(local[i], local[j])] += w * gi * gj;
                }
            }
        } else {
            let mut c = vec![0.0; n];
            for &(j, v) in row {
                c[j] = v;
            }
            cols.push(c);
            mid.push(MBlock::One(w));
        }
    }
    for (gu, gv, a, b) in &contrib.rank2 {
        cols.push(gu.clone());
        cols.push(gv.clone());
        mid.push(MBlock::Two(*a, *b));
    }
    // Blocks with no diagonal mass get a unit shift, undone through U.
    let mut blocks = Vec::with_capacity(n_groups);
    for (g, blk) in d.into_iter().enumerate() {
        let sym = (&blk + blk.transpose()) * 0.5;
        match Cholesky::new(sym.clone()) {
            Some(c) => blocks.push(c),
            None => {
                let shift = (0..sym.nrows()).map(|i| sym[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
                let mut shifted = sym;
                for (pos, &v) in members[g].iter().enumerate() {
                    shifted[(pos, pos)] += shift;
                    let mut c = vec![0.0; n];
                    c[v] = 1.0;
                    cols.push(c);
                    mid.push(MBlock::One(-shift));
                }
                blocks.push(Cholesky::new(shifted).ok_or("group block not positive definite")?);
            }
        }
    }
    let r = cols.len();
    let u = DMatrix::from_fn(n, r, |i, j| cols[j][i]);
    let ut = u.transpose();
    // M^-1, block by block.
    let mut cap = DMatrix::<f64>::zeros(r, r);
    let mut j = 0;
    for m in &mid {
        match *m {
            MBlock::One(w) => {
                cap[(j, j)] = 1.0 / w;
                j += 1;
            }
            MBlock::Two(a, b) => {
                // [[a, b], [b, 0]]^-1 = [[0, 1/b], [1/b, -a/b^2]]
                cap[(j, j + 1)] = 1.0 / b;
                cap[(j + 1, j)] = 1.0 / b;
                cap[(j + 1, j + 1)] = -a / (b * b);
                j += 2;
            }
        }
    }
    let partial = Grouped { members, blocks, dinv_u: DMatrix::zeros(0, 0), ut, cap: LU::new(DMatrix::identity(1, 1)) };
    let dinv_u = partial.dinv(&u);
    cap.gemm(1.0, &partial.ut, &dinv_u, 1.0);
    if cap.iter().any(|v| !v.is_finite()) {
        return Err("capacitance matrix not finite".into());
    }
    let cap = LU::new(cap);
    Ok(HessianFactor::Grouped(Grouped { dinv_u, cap, ..partial }))
}

/// Hessian factor plus the equality Schur complement `A H^-1 A'`.
struct Factored {
    hessian: HessianFactor,
    hinv_at: DMatrix<f64>,
    schur: Option<Cholesky<f64, Dyn>>,
}

impl Factored {
    fn new(prog: &ConeProgram, hessian: HessianFactor) -> Result<Self, String> {
        let n = prog.num_vars();
        if prog.a.nrows() == 0 {
            return Ok(Self { hessian, hinv_at: DMatrix::zeros(n, 0), schur: None });
        }
        let hinv_at = hessian.solve(&prog.a.transpose());
        let s = &prog.a * &hinv_at;
        let s = (&s + s.transpose()) * 0.5;
        let schur = cholesky_regularized(s).ok_or("equality Schur complement singular")?;
        Ok(Self { hessian, hinv_at, schur: Some(schur) })
    }
}

/// Factored Newton system at one scaling point.
pub(super) struct Kkt<'a> {
    prog: &'a ConeProgram,
    scaling: &'a Scaling,
    contrib: Contributions,
    primary: Factored,
    dense: OnceCell<Option<Factored>>,
}

/// Refinement stops once the residual falls below this fraction of the rhs.
const REFINE_TOL: f64 = 1e-13;
/// A grouped solve that cannot refine below this is redone densely.
const FALLBACK_TOL: f64 = 1e-10;

impl<'a> Kkt<'a> {
    pub(super) fn factor(prog: &'a ConeProgram, scaling: &'a Scaling) -> Result<Self, String> {
        let contrib = contributions(prog, scaling);
        let hessian = match &prog.groups {
            Some(groups) => grouped_factor(prog, groups, &contrib).or_else(|_| dense_factor(prog, &contrib))?,
            None => dense_factor(prog, &contrib)?,
        };
        let primary = Factored::new(prog, hessian)?;
        Ok(Self { prog, scaling, contrib, primary, dense: OnceCell::new() })
    }

    /// Solve `A'dy + G'dz = bx`, `A dx = by`, `G dx - W^2 dz = bz`.
    pub(super) fn solve(&self, bx: &[f64], by: &[f64], bz: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (sol, res, scale) = self.refined(&self.primary, bx, by, bz);
        if res <= FALLBACK_TOL * scale || matches!(self.primary.hessian, HessianFactor::Dense(_)) {
            return sol;
        }
        let dense = self.dense.get_or_init(|| {
            dense_factor(self.prog, &self.contrib).ok().and_then(|h| Factored::new(self.prog, h).ok())
        });
        match dense {
            Some(f) => {
                let (alt, alt_res, _) = self.refined(f, bx, by, bz);
                if alt_res < res { alt } else { sol }
            }
            None => sol,
        }
    }

    #[allow(clippy::type_complexity)]
    fn refined(
        &self,
        f: &Factored,
        bx: &[f64],
        by: &[f64],
        bz: &[f64],
    ) -> ((Vec<f64>, Vec<f64>, Vec<f64>), f64, f64) {
        let cones = &self.prog.cones;
        let (mut dx, mut dy, mut dz) = self.solve_reduced(f, bx, by, bz);
        let scale = norm(bx).max(norm(by)).max(norm(bz)).max(1e-300);
        let mut res = f64::INFINITY;
        for round in 0..4 {
            let mut r1 = bx.to_vec();
            axpy(&mut r1, -1.0, &self.prog.at_mul(&dy));
            axpy(&mut r1, -1.0, &self.prog.gt_mul(&dz));
            let mut r2 = by.to_vec();
            axpy(&mut r2, -1.0, &self.prog.a_mul(&dx));
            let mut r3 = bz.to_vec();
            axpy(&mut r3, -1.0, &self.prog.g_mul(&dx));
            axpy(&mut r3, 1.0, &self.scaling.apply(cones, &self.scaling.apply(cones, &dz)));
            res = norm(&r1).max(norm(&r2)).max(norm(&r3));
            if !res.is_finite() || res <= REFINE_TOL * scale || round == 3 {
                break;
            }
            let (cx, cy, cz) = self.solve_reduced(f, &r1, &r2, &r3);
            axpy(&mut dx, 1.0, &cx);
            axpy(&mut dy, 1.0, &cy);
            axpy(&mut dz, 1.0, &cz);
        }
        ((dx, dy, dz), res, scale)
    }

    fn solve_reduced(&self, f: &Factored, bx: &[f64], by: &[f64], bz: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let cones = &self.prog.cones;
        let w2inv_bz = self.scaling.apply_inv(cones, &self.scaling.apply_inv(cones, bz));
        let mut rhs = bx.to_vec();
        axpy(&mut rhs, 1.0, &self.prog.gt_mul(&w2inv_bz));
        let hinv_rhs = f.hessian.solve(&DMatrix::from_column_slice(rhs.len(), 1, &rhs)).column(0).into_owned();
        let (dx, dy) = match &f.schur {
            Some(schur) => {
                let t = &self.prog.a * &hinv_rhs - DVector::from_column_slice(by);
                let dy = schur.solve(&t);
                let dx = &hinv_rhs - &f.hinv_at * &dy;
                (dx.as_slice().to_vec(), dy.as_slice().to_vec())
            }
            None => (hinv_rhs.as_slice().to_vec(), Vec::new()),
        };
        let mut gdx = self.prog.g_mul(&dx);
        axpy(&mut gdx, -1.0, bz);
        let dz = self.scaling.apply_inv(cones, &self.scaling.apply_inv(cones, &gdx));
        (dx, dy, dz)
    }
}
