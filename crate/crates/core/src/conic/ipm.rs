//! Primal-dual interior-point method for
//!
//! ```text
//! minimize    c'x
//! subject to  G x + s = h,  A x = b,  s in K
//! ```
//!
//! with `K` a product of orthants and second-order cones. Infeasible start,
//! Nesterov-Todd scaling, Mehrotra predictor-corrector. Newton systems are
//! handled in [`super::kkt`].

use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector};

use super::cone::{self, Cone, Scaling};
use super::kkt::Kkt;

/// A sparse row of `G`: `(column, value)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct ConeProgram {
    pub c: Vec<f64>,
    pub g: Vec<SparseRow>,
    pub h: Vec<f64>,
    pub cones: Vec<Cone>,
    /// Dense equality rows (may be empty).
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    /// Optional partition of the variables. When rows of `G` mostly stay
    /// within one group, the Newton system is solved as block-diagonal plus
    /// low-rank instead of densely.
    pub groups: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmSettings {
    pub max_iters: usize,
    pub feastol: f64,
    pub abstol: f64,
    pub reltol: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self { max_iters: 80, feastol: 1e-9, abstol: 1e-9, reltol: 1e-9 }
    }
}

/// Current iterate plus residual summaries, handed to the monitor.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub iter: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub pcost: f64,
    pub dcost: f64,
    pub gap: f64,
    /// Relative primal residual `max(|Ax-b|, |Gx+s-h|) / max(1, |(b,h)|)`.
    pub pres: f64,
    /// Relative dual residual `|c + A'y + G'z| / max(1, |c|)`.
    pub dres: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IpmStatus<T> {
    Optimal,
    /// The monitor asked to stop.
    Stopped(T),
    MaxIterations,
    /// Factorization failure or loss of interiority.
    Numerical(String),
}

#[derive(Debug, Clone)]
pub struct IpmResult<T> {
    pub status: IpmStatus<T>,
    pub last: Iterate,
}

impl ConeProgram {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.h.len()
    }

    pub(super) fn g_mul(&self, x: &[f64]) -> Vec<f64> {
        self.g.iter().map(|row| row.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    pub(super) fn gt_mul(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vars()];
        for (row, &zr) in self.g.iter().zip(z) {
            if zr != 0.0 {
                for &(j, v) in row {
                    out[j] += v * zr;
                }
            }
        }
        out
    }

    pub(super) fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    pub(super) fn at_mul(&self, y: &[f64]) -> Vec<f64> {
        if y.is_empty() {
            return vec![0.0; self.num_vars()];
        }
        self.a.tr_mul(&DVector::from_column_slice(y)).as_slice().to_vec()
    }
}

pub(super) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(super) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(super) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn shift_into_cone(cones: &[Cone], v: &mut [f64]) {
    // alpha_p = min{alpha : v + alpha e in K}; shift to 1 + alpha_p inside.
    let mut worst = f64::NEG_INFINITY;
    for c in cones {
        let o = c.offset();
        match *c {
            Cone::NonNeg { dim, .. } => {
                for i in 0..dim {
                    worst = worst.max(-v[o + i]);
                }
            }
            Cone::Soc { dim, .. } => {
                let n1 = norm(&v[o + 1..o + dim]);
                worst = worst.max(n1 - v[o]);
            }
        }
    }
    if worst >= 0.0 {
        let e = cone::identity(cones, v.len());
        axpy(v, 1.0 + worst, &e);
    }
}

/// Run the interior-point method. `monitor` sees every iterate and may stop
/// the solve early with a value of its choosing.
pub fn solve<T>(
    prog: &ConeProgram,
    settings: &IpmSettings,
    mut monitor: impl FnMut(&Iterate) -> ControlFlow<T>,
) -> IpmResult<T> {
    let (n, m, p) = (prog.num_vars(), prog.num_rows(), prog.a.nrows());
    let cones = &prog.cones;
    let nu = cone::total_degree(cones) as f64;
    let res_scale_p = norm(&prog.h).max(norm(&prog.b)).max(1.0);
    let res_scale_d = norm(&prog.c).max(1.0);

    let empty = |status| IpmResult {
        status,
        last: Iterate {
            iter: 0,
            x: vec![0.0; n],
            y: vec![0.0; p],
            s: vec![0.0; m],
            z: vec![0.0; m],
            pcost: f64::NAN,
            dcost: f64::NAN,
            gap: f64::NAN,
            pres: f64::NAN,
            dres: f64::NAN,
        },
    };

    // Initial point from two least-norm solves with identity scaling.
    let ident = Scaling::identity(cones);
    let kkt0 = match Kkt::factor(prog, &ident) {
        Ok(k) => k,
        Err(e) => return empty(IpmStatus::Numerical(e)),
    };
    let (x0, _, neg_s) = kkt0.solve(&vec![0.0; n], &prog.b, &prog.h);
    let mut x = x0;
    let mut s: Vec<f64> = neg_s.iter().map(|v| -v).collect();
    let neg_c: Vec<f64> = prog.c.iter().map(|v| -v).collect();
    let (_, y0, z0) = kkt0.solve(&neg_c, &vec![0.0; p], &vec![0.0; m]);
    let mut y = y0;
    let mut z = z0;
    shift_into_cone(cones, &mut s);
    shift_into_cone(cones, &mut z);

    let mut last = None;
    for iter in 0..=settings.max_iters {
        // Residuals.
        let mut rx = prog.c.clone();
        axpy(&mut rx, 1.0, &prog.at_mul(&y));
        axpy(&mut rx, 1.0, &prog.gt_mul(&z));
        let mut ry = prog.a_mul(&x);
        axpy(&mut ry, -1.0, &prog.b);
        let mut rz = prog.g_mul(&x);
        axpy(&mut rz, 1.0, &s);
        axpy(&mut rz, -1.0, &prog.h);
        let gap = dot(&s, &z);
        let pcost = dot(&prog.c, &x);
        let dcost = -dot(&prog.h, &z) - dot(&prog.b, &y);
        let pres = norm(&ry).max(norm(&rz)) / res_scale_p;
        let dres = norm(&rx) / res_scale_d;
        let it = Iterate { iter, x: x.clone(), y: y.clone(), s: s.clone(), z: z.clone(), pcost, dcost, gap, pres, dres };
        if let ControlFlow::Break(v) = monitor(&it) {
            return IpmResult { status: IpmStatus::Stopped(v), last: it };
        }
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        if pres <= settings.feastol
            && dres <= settings.feastol
            && (gap <= settings.abstol || relgap <= settings.reltol)
        {
            return IpmResult { status: IpmStatus::Optimal, last: it };
        }
        if iter == settings.max_iters {
            last = Some(it);
            break;
        }

        let Some((scaling, lambda)) = cone::Scaling::nesterov_todd(cones, &s, &z) else {
            return IpmResult { status: IpmStatus::Numerical("iterate left the cone".into()), last: it };
        };
        let kkt = match Kkt::factor(prog, &scaling) {
            Ok(k) => k,
            Err(e) => return IpmResult { status: IpmStatus::Numerical(e), last: it },
        };
        let mu = gap / nu;
        let neg_rx: Vec<f64> = rx.iter().map(|v| -v).collect();
        let neg_ry: Vec<f64> = ry.iter().map(|v| -v).collect();

        // Newton direction for complementarity target `ds_rhs` (in lambda space).
        let direction = |ds_rhs: &[f64]| {
            let q = cone::jordan_divide(cones, &lambda, ds_rhs);
            let wq = scaling.apply(cones, &q);
            let bz: Vec<f64> = rz.iter().zip(&wq).map(|(a, b)| -a - b).collect();
            let (dx, dy, dz) = kkt.solve(&neg_rx, &neg_ry, &bz);
            // ds = W (q - W dz)
            let wdz = scaling.apply(cones, &dz);
            let inner: Vec<f64> = q.iter().zip(&wdz).map(|(a, b)| a - b).collect();
            let ds = scaling.apply(cones, &inner);
            (dx, dy, dz, ds, wdz)
        };
        let step_len = |ds: &[f64], wdz: &[f64]| {
            let sds = scaling.apply_inv(cones, ds);
            cone::max_step(cones, &lambda, &sds).min(cone::max_step(cones, &lambda, wdz))
        };

        let ll = cone::jordan_product(cones, &lambda, &lambda);
        let aff_rhs: Vec<f64> = ll.iter().map(|v| -v).collect();
        let (_, _, _, ds_a, wdz_a) = direction(&aff_rhs);
        let alpha_a = step_len(&ds_a, &wdz_a).min(1.0);
        let sigma = (1.0 - alpha_a).powi(3).clamp(0.0, 1.0);

        let corr = cone::jordan_product(cones, &scaling.apply_inv(cones, &ds_a), &wdz_a);
        let e = cone::identity(cones, m);
        let comb_rhs: Vec<f64> =
            (0..m).map(|i| -ll[i] - corr[i] + sigma * mu * e[i]).collect();
        let (dx, dy, dz, ds, wdz) = direction(&comb_rhs);
        let alpha = (0.99 * step_len(&ds, &wdz)).min(1.0);
        if !alpha.is_finite() || alpha <= 0.0 {
            return IpmResult { status: IpmStatus::Numerical("zero step".into()), last: it };
        }
        axpy(&mut x, alpha, &dx);
        axpy(&mut y, alpha, &dy);
        axpy(&mut s, alpha, &ds);
        axpy(&mut z, alpha, &dz);
        if x.iter().chain(&s).chain(&z).any(|v| !v.is_finite()) {
            return IpmResult { status: IpmStatus::Numerical("non-finite iterate".into()), last: it };
        }
    }
    IpmResult { status: IpmStatus::MaxIterations, last: last.expect("loop records the final iterate") }
}
