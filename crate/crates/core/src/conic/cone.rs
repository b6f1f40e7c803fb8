//! Product-cone algebra: nonnegative orthants and second-order cones,
//! Jordan products, Nesterov-Todd scaling and step-to-boundary.

/// One block of the product cone, stored contiguously at `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    NonNeg { offset: usize, dim: usize },
    Soc { offset: usize, dim: usize },
}

impl Cone {
    pub fn offset(&self) -> usize {
        match *self {
            Cone::NonNeg { offset, .. } | Cone::Soc { offset, .. } => offset,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Cone::NonNeg { dim, .. } | Cone::Soc { dim, .. } => dim,
        }
    }

    /// Barrier degree contributed by this block.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::NonNeg { dim, .. } => dim,
            Cone::Soc { .. } => 1,
        }
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset()..self.offset() + self.dim()
    }
}

pub fn total_degree(cones: &[Cone]) -> usize {
    cones.iter().map(Cone::degree).sum()
}

/// Identity element `e` of the product cone.
pub fn identity(cones: &[Cone], len: usize) -> Vec<f64> {
    let mut e = vec![0.0; len];
    for c in cones {
        match *c {
            Cone::NonNeg { offset, dim } => e[offset..offset + dim].fill(1.0),
            Cone::Soc { offset, .. } => e[offset] = 1.0,
        }
    }
    e
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x0^2 - ||x1||^2`, computed as `(x0 - ||x1||)(x0 + ||x1||)`.
fn soc_det(x: &[f64]) -> f64 {
    let n1 = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    (x[0] - n1) * (x[0] + n1)
}

/// Jordan product `a o b`.
pub fn jordan_product(cones: &[Cone], a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for c in cones {
        let r = c.range();
        let (a, b, o) = (&a[r.clone()], &b[r.clone()], &mut out[r]);
        match c {
            Cone::NonNeg { .. } => {
                for i in 0..a.len() {
                    o[i] = a[i] * b[i];
                }
            }
            Cone::Soc { .. } => {
                o[0] = dot(a, b);
                for i in 1..a.len() {
                    o[i] = a[0] * b[i] + b[0] * a[i];
                }
            }
        }
    }
    out
}

/// Solve `l o t = r` for `t`, with `l` in the cone interior.
pub fn jordan_divide(cones: &[Cone], l: &[f64], r: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; l.len()];
    for c in cones {
        let rg = c.range();
        let (l, r, o) = (&l[rg.clone()], &r[rg.clone()], &mut out[rg]);
        match c {
            Cone::NonNeg { .. } => {
                for i in 0..l.len() {
                    o[i] = r[i] / l[i];
                }
            }
            Cone::Soc { .. } => {
                let det = soc_det(l);
                let t0 = (l[0] * r[0] - dot(&l[1..], &r[1..])) / det;
                o[0] = t0;
                for i in 1..l.len() {
                    o[i] = (r[i] - t0 * l[i]) / l[0];
                }
            }
        }
    }
    out
}

/// Per-block Nesterov-Todd scaling. For a second-order cone
/// `W = beta (2 v v' - J)` with `J = diag(1, -1, ..., -1)`; for the orthant
/// `W = diag(d)`.
#[derive(Debug, Clone)]
pub enum BlockScaling {
    NonNeg { d: Vec<f64> },
    Soc { beta: f64, v: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Scaling {
    pub blocks: Vec<BlockScaling>,
}

impl Scaling {
    pub fn identity(cones: &[Cone]) -> Self {
        let blocks = cones
            .iter()
            .map(|c| match *c {
                Cone::NonNeg { dim, .. } => BlockScaling::NonNeg { d: vec![1.0; dim] },
                Cone::Soc { dim, .. } => {
                    let mut v = vec![0.0; dim];
                    v[0] = 1.0;
                    BlockScaling::Soc { beta: 1.0, v }
                }
            })
            .collect();
        Self { blocks }
    }

    /// NT scaling point for interior `s`, `z`; returns it with `lambda = W z`.
    pub fn nesterov_todd(cones: &[Cone], s: &[f64], z: &[f64]) -> Option<(Self, Vec<f64>)> {
        let mut blocks = Vec::with_capacity(cones.len());
        for c in cones {
            let r = c.range();
            let (s, z) = (&s[r.clone()], &z[r]);
            match c {
                Cone::NonNeg { .. } => {
                    if s.iter().chain(z).any(|&v| v <= 0.0 || !v.is_finite()) {
                        return None;
                    }
                    let d = s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect();
                    blocks.push(BlockScaling::NonNeg { d });
                }
                Cone::Soc { .. } => {
                    let (ds, dz) = (soc_det(s), soc_det(z));
                    if ds <= 0.0 || dz <= 0.0 || s[0] <= 0.0 || z[0] <= 0.0 {
                        return None;
                    }
                    let (ns, nz) = (ds.sqrt(), dz.sqrt());
                    let beta = (ns / nz).sqrt();
                    let sb: Vec<f64> = s.iter().map(|v| v / ns).collect();
                    let zb: Vec<f64> = z.iter().map(|v| v / nz).collect();
                    // NT point w = (s + J z) / gamma maps z to s through P(w);
                    // W is its square root, built from v = (w + e) / sqrt(2 (w0 + 1)).
                    let gamma = (2.0 * (1.0 + dot(&sb, &zb))).sqrt();
                    let mut w: Vec<f64> = sb.iter().zip(&zb).map(|(a, b)| (a - b) / gamma).collect();
                    w[0] = (sb[0] + zb[0]) / gamma;
                    let denom = (2.0 * (w[0] + 1.0)).sqrt();
                    let mut v: Vec<f64> = w.iter().map(|x| x / denom).collect();
                    v[0] = (w[0] + 1.0) / denom;
                    blocks.push(BlockScaling::Soc { beta, v });
                }
            }
        }
        let scaling = Self { blocks };
        let lambda = scaling.apply(cones, z);
        Some((scaling, lambda))
    }

    /// `W x`.
    pub fn apply(&self, cones: &[Cone], x: &[f64]) -> Vec<f64> {
        self.apply_impl(cones, x, false)
    }

    /// `W^{-1} x`.
    pub fn apply_inv(&self, cones: &[Cone], x: &[f64]) -> Vec<f64> {
        self.apply_impl(cones, x, true)
    }

    fn apply_impl(&self, cones: &[Cone], x: &[f64], inverse: bool) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (c, b) in cones.iter().zip(&self.blocks) {
            let r = c.range();
            let (x, o) = (&x[r.clone()], &mut out[r]);
            match b {
                BlockScaling::NonNeg { d } => {
                    for i in 0..x.len() {
                        o[i] = if inverse { x[i] / d[i] } else { x[i] * d[i] };
                    }
                }
                BlockScaling::Soc { beta, v } => {
                    // W = beta (2 v v' - J); W^{-1} = (2 Jv (Jv)' - J) / beta.
                    if inverse {
                        let jv_x = v[0] * x[0] - dot(&v[1..], &x[1..]);
                        o[0] = (2.0 * v[0] * jv_x - x[0]) / beta;
                        for i in 1..x.len() {
                            o[i] = (-2.0 * v[i] * jv_x + x[i]) / beta;
                        }
                    } else {
                        let vx = dot(v, x);
                        o[0] = beta * (2.0 * v[0] * vx - x[0]);
                        for i in 1..x.len() {
                            o[i] = beta * (2.0 * v[i] * vx + x[i]);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Largest `alpha >= 0` keeping `x + alpha dx` in the cone, for interior `x`.
/// Returns `f64::INFINITY` when the ray never leaves the cone.
pub fn max_step(cones: &[Cone], x: &[f64], dx: &[f64]) -> f64 {
    let mut alpha = f64::INFINITY;
    for c in cones {
        let r = c.range();
        let (x, d) = (&x[r.clone()], &dx[r]);
        match c {
            Cone::NonNeg { .. } => {
                for i in 0..x.len() {
                    if d[i] < 0.0 {
                        alpha = alpha.min(-x[i] / d[i]);
                    }
                }
            }
            Cone::Soc { .. } => alpha = alpha.min(soc_step(x, d)),
        }
    }
    alpha
}

/// First root of `(x0 + a d0)^2 - ||x1 + a d1||^2 = 0` with `x0 + a d0 >= 0`.
fn soc_step(x: &[f64], d: &[f64]) -> f64 {
    let qa = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let qb = x[0] * d[0] - dot(&x[1..], &d[1..]);
    let qc = soc_det(x).max(0.0);
    // f(a) = qa a^2 + 2 qb a + qc, f(0) = qc > 0.
    let mut alpha = f64::INFINITY;
    if d[0] < 0.0 {
        alpha = -x[0] / d[0];
    }
    let disc = qb * qb - qa * qc;
    let root = if qa.abs() <= f64::EPSILON * (qb.abs() + qc.abs()).max(f64::MIN_POSITIVE) {
        if qb < 0.0 { Some(-qc / (2.0 * qb)) } else { None }
    } else if disc < 0.0 {
        None
    } else {
        // Stable quadratic roots.
        let q = -(qb + qb.signum() * disc.sqrt());
        let r1 = q / qa;
        let r2 = if q != 0.0 { qc / q } else { f64::INFINITY };
        [r1, r2].into_iter().filter(|&r| r > 0.0).reduce(f64::min)
    };
    if let Some(r) = root {
        alpha = alpha.min(r);
    }
    alpha
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cones() -> Vec<Cone> {
        vec![Cone::NonNeg { offset: 0, dim: 2 }, Cone::Soc { offset: 2, dim: 3 }, Cone::Soc { offset: 5, dim: 4 }]
    }

    fn interior(seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 10_000) as f64 / 5_000.0 - 1.0
        };
        let mut x: Vec<f64> = (0..9).map(|_| next()).collect();
        x[0] = x[0].abs() + 0.1;
        x[1] = x[1].abs() + 0.1;
        let n1 = (x[3] * x[3] + x[4] * x[4]).sqrt();
        x[2] = n1 + 0.2 + next().abs();
        let n2 = (x[6] * x[6] + x[7] * x[7] + x[8] * x[8]).sqrt();
        x[5] = n2 + 0.05 + next().abs();
        x
    }

    #[test]
    fn nt_scaling_maps_z_and_s_to_the_same_point() {
        let c = cones();
        for seed in 1..50 {
            let (s, z) = (interior(seed), interior(seed + 1000));
            let (w, lambda) = Scaling::nesterov_todd(&c, &s, &z).unwrap();
            let winv_s = w.apply_inv(&c, &s);
            for (a, b) in lambda.iter().zip(&winv_s) {
                assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
            }
            let back = w.apply(&c, &w.apply_inv(&c, &z));
            for (a, b) in back.iter().zip(&z) {
                assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn jordan_division_inverts_product() {
        let c = cones();
        let l = interior(7);
        let r = interior(9);
        let t = jordan_divide(&c, &l, &r);
        let back = jordan_product(&c, &l, &t);
        for (a, b) in back.iter().zip(&r) {
            assert!((a - b).abs() < 1e-12);
        }
        let e = identity(&c, 9);
        assert_eq!(jordan_product(&c, &e, &r), r);
    }

    #[test]
    fn step_lands_on_boundary() {
        let c = [Cone::Soc { offset: 0, dim: 3 }];
        let x = [2.0, 0.5, -0.3];
        let d = [-1.0, 0.4, 0.9];
        let a = max_step(&c, &x, &d);
        let y: Vec<f64> = x.iter().zip(&d).map(|(p, q)| p + a * q).collect();
        assert!(soc_det(&y).abs() < 1e-10 && y[0] >= 0.0, "{y:?}");
        assert_eq!(max_step(&c, &x, &[1.0, 0.0, 0.0]), f64::INFINITY);
        let o = [Cone::NonNeg { offset: 0, dim: 2 }];
        assert_eq!(max_step(&o, &[1.0, 2.0], &[-0.5, -4.0]), 0.5);
    }
}
