//! Discretized averaging operators on finite grids: midpoint Riemann sums of
//! `T_Q chi_F (x, x') = integral over [-1,1]^n of chi_F(x+t, x'+Q(x,t)) dt`,
//! discrete L^q norms, restricted-type ratios, anisotropic-box sweeps, the
//! shear identity for symmetric maps, and the inflation multiplicity check.
//!
//! Supported base dimensions are n = 1 and n = 2; higher n means a grid in
//! R^{2n} with at least (2L/h)^{2n} cells, which is refused with a cost
//! estimate instead of silently thrashing.

use crate::bilinear::BilinearMap;
use crate::error::{Error, Result};
use crate::matrix::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Grid for functions of (x, x') on `[-L, L]^{2n}` with spacing `h`, plus the
/// spacing of the inner t-integral over `[-1, 1]^n`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub half_width: f64,
    pub h: f64,
    pub t_spacing: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Precondition("grid dimension must be positive".into()));
        }
        if self.n > 2 {
            let cells = (2.0 * self.half_width / self.h).powi(2 * self.n as i32);
            return Err(Error::Resolution(format!(
                "base dimension {} needs a {:.2e}-cell grid in R^{}; only n <= 2 is supported",
                self.n,
                cells,
                2 * self.n
            )));
        }
        if !(self.h > 0.0 && self.t_spacing > 0.0 && self.half_width >= 1.0) {
            return Err(Error::Precondition(
                "grid needs h > 0, t_spacing > 0, half_width >= 1".into(),
            ));
        }
        Ok(())
    }

    fn axis(&self) -> Axis {
        let count = (2.0 * self.half_width / self.h).round() as usize;
        Axis { min: -self.half_width, h: self.h, count }
    }

    fn t_axis(&self) -> Axis {
        let count = (2.0 / self.t_spacing).round() as usize;
        Axis { min: -1.0, h: self.t_spacing, count }
    }
}

/// One axis of midpoint cells: centers `min + (i + 1/2) h`.
#[derive(Clone, Copy, Debug)]
struct Axis {
    min: f64,
    h: f64,
    count: usize,
}

impl Axis {
    fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.h
    }

    /// Indices of cells whose center lies in [lo, hi], clamped to the axis.
    fn cells_in(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = ((lo - self.min) / self.h - 0.5).ceil().max(0.0) as usize;
        let end = (((hi - self.min) / self.h - 0.5).floor() + 1.0).max(0.0) as usize;
        start.min(self.count)..end.min(self.count)
    }
}

/// Indicator set in R^{2n}: disjoint axis-aligned boxes, or an explicit mask
/// (2-D only).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum IndicatorSet {
    /// Each box is a list of 2n closed intervals (lo, hi).
    Boxes(Vec<Vec<(f64, f64)>>),
    Mask(GridMask),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridMask {
    pub origin: (f64, f64),
    pub h: f64,
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<bool>,
}

impl IndicatorSet {
    /// Validate intervals and pairwise disjointness (touching faces allowed).
    /// An empty list is the empty set.
    pub fn boxes(dim2n: usize, boxes: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        for (i, b) in boxes.iter().enumerate() {
            if b.len() != dim2n {
                return Err(Error::Dimension(format!(
                    "box {i} has {} intervals, expected {dim2n}",
                    b.len()
                )));
            }
            if b.iter().any(|&(lo, hi)| !(lo < hi)) {
                return Err(Error::Precondition(format!("box {i} has an empty interval")));
            }
        }
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                let overlap = boxes[i]
                    .iter()
                    .zip(&boxes[j])
                    .all(|(&(alo, ahi), &(blo, bhi))| alo < bhi && blo < ahi);
                if overlap {
                    return Err(Error::Precondition(format!("boxes {i} and {j} overlap")));
                }
            }
        }
        Ok(IndicatorSet::Boxes(boxes))
    }

    pub fn mask(mask: GridMask) -> Result<Self> {
        if mask.cells.len() != mask.rows * mask.cols {
            return Err(Error::Dimension("mask cell count".into()));
        }
        if mask.h <= 0.0 {
            return Err(Error::Precondition("mask spacing must be positive".into()));
        }
        Ok(IndicatorSet::Mask(mask))
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        match self {
            IndicatorSet::Boxes(boxes) => boxes
                .iter()
                .any(|b| b.iter().zip(z).all(|(&(lo, hi), &v)| lo <= v && v <= hi)),
            IndicatorSet::Mask(m) => {
                let i = ((z[0] - m.origin.0) / m.h).floor();
                let j = ((z[1] - m.origin.1) / m.h).floor();
                if i < 0.0 || j < 0.0 {
                    return false;
                }
                let (i, j) = (i as usize, j as usize);
                i < m.rows && j < m.cols && m.cells[i * m.cols + j]
            }
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            IndicatorSet::Boxes(boxes) => boxes
                .iter()
                .map(|b| b.iter().map(|&(lo, hi)| hi - lo).product::<f64>())
                .sum(),
            IndicatorSet::Mask(m) => {
                m.h * m.h * m.cells.iter().filter(|&&c| c).count() as f64
            }
        }
    }

    /// Bounding interval of the set in coordinate d.
    fn extent(&self, d: usize) -> (f64, f64) {
        match self {
            IndicatorSet::Boxes(boxes) => boxes.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), b| (lo.min(b[d].0), hi.max(b[d].1)),
            ),
            IndicatorSet::Mask(m) => {
                if d == 0 {
                    (m.origin.0, m.origin.0 + m.rows as f64 * m.h)
                } else {
                    (m.origin.1, m.origin.1 + m.cols as f64 * m.h)
                }
            }
        }
    }
}

/// Midpoint Riemann value of `T chi_F` at one point, with the offset map
/// `t -> phi(t)` supplied by the caller (direct: Q(x, t); shear: -Q(t,t)/2).
fn operator_value_at(
    grid: &GridSpec,
    membership: &dyn Fn(&[f64]) -> bool,
    x: &[f64],
    xp: &[f64],
    phi: &dyn Fn(&[f64], &mut Vec<f64>),
) -> f64 {
    let n = grid.n;
    let taxis = grid.t_axis();
    let mut count = 0u64;
    let mut t = vec![0.0; n];
    let mut offset = Vec::new();
    let mut z = vec![0.0; 2 * n];
    let mut idx = vec![0usize; n];
    loop {
        for d in 0..n {
            t[d] = taxis.center(idx[d]);
        }
        phi(&t, &mut offset);
        for d in 0..n {
            z[d] = x[d] + t[d];
            z[n + d] = xp[d] + offset[d];
        }
        if membership(&z) {
            count += 1;
        }
        // advance the t multi-index
        let mut d = 0;
        loop {
            if d == n {
                return grid.t_spacing.powi(n as i32) * count as f64;
            }
            idx[d] += 1;
            if idx[d] < taxis.count {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// `T_Q chi_F` at the given (x, x') points by the midpoint rule.
pub fn apply_operator(
    q: &BilinearMap<f64>,
    f: &IndicatorSet,
    points: &[(Vec<f64>, Vec<f64>)],
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    grid.validate()?;
    if !q.is_square() || q.n_in() != grid.n {
        return Err(Error::Precondition("operator needs a square map matching the grid".into()));
    }
    let n = grid.n;
    points
        .iter()
        .map(|(x, xp)| {
            if x.len() != n || xp.len() != n {
                return Err(Error::Dimension("points must be (x, x') with n entries each".into()));
            }
            // Q(x, t) = A_x t with A_x[i][k] = sum_j Q_ijk x_j
            let ax = Mat::from_fn(n, n, |i, k| {
                (0..n).map(|j| q.coeff(i, j, k) * x[j]).sum::<f64>()
            });
            Ok(operator_value_at(
                grid,
                &|z| f.contains(z),
                x,
                xp,
                &|t, out| {
                    out.clear();
                    for i in 0..n {
                        out.push((0..n).map(|k| ax[(i, k)] * t[k]).sum());
                    }
                },
            ))
        })
        .collect()
}

/// Discrete L^q norm `(h^{2n} sum |v|^q)^{1/q}` of grid values.
pub fn lq_norm(values: &[f64], q_exp: f64, grid: &GridSpec) -> Result<f64> {
    if q_exp < 1.0 {
        return Err(Error::Precondition("L^q norm needs q >= 1".into()));
    }
    let cell = grid.h.powi(2 * grid.n as i32);
    Ok((cell * values.iter().map(|v| v.abs().powf(q_exp)).sum::<f64>()).powf(1.0 / q_exp))
}

/// Offset producers for the two grid-sum paths.
enum OffsetMode<'a> {
    /// x' offset Q(x, t), linear in t for fixed x.
    Direct(&'a BilinearMap<f64>),
    /// x' offset -Q(t,t)/2 with membership pre-sheared by +Q(y,y)/2.
    Convolution(&'a BilinearMap<f64>),
}

/// Sum of |T chi_F|^q over the full grid, organized per x-cell: every (t, box)
/// pair contributes the interval of x' cells it covers, accumulated exactly
/// as counts. Identical to the pointwise midpoint rule, reduced in x order.
fn grid_power_sum(
    f: &IndicatorSet,
    grid: &GridSpec,
    q_exp: f64,
    mode: &OffsetMode,
) -> Result<f64> {
    let n = grid.n;
    let q = match mode {
        OffsetMode::Direct(q) | OffsetMode::Convolution(q) => *q,
    };
    let IndicatorSet::Boxes(boxes) = f else {
        return Err(Error::Precondition("grid norms need a box-list indicator set".into()));
    };
    let axis = grid.axis();
    let taxis = grid.t_axis();

    // iterate x cells where x + t can land in a box
    let x_cells: Vec<Vec<usize>> = (0..n)
        .map(|d| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for b in boxes {
                lo = lo.min(b[d].0 - 1.0);
                hi = hi.max(b[d].1 + 1.0);
            }
            axis.cells_in(lo, hi).collect()
        })
        .collect();
    let x_points: Vec<Vec<usize>> = match n {
        1 => x_cells[0].iter().map(|&i| vec![i]).collect(),
        2 => {
            let mut v = Vec::with_capacity(x_cells[0].len() * x_cells[1].len());
            for &i in &x_cells[0] {
                for &j in &x_cells[1] {
                    v.push(vec![i, j]);
                }
            }
            v
        }
        _ => unreachable!("validated n <= 2"),
    };

    let cellpow = grid.t_spacing.powi(n as i32);
    let partials: Vec<f64> = x_points
        .par_iter()
        .map(|xi| {
            let x: Vec<f64> = xi.iter().map(|&i| axis.center(i)).collect();
            let ax = Mat::from_fn(n, n, |i, k| {
                (0..n).map(|j| q.coeff(i, j, k) * x[j]).sum::<f64>()
            });
            // count accumulation over the x' grid via difference arrays
            let mut diff = vec![0i64; if n == 1 { axis.count + 1 } else { (axis.count + 1) * (axis.count + 1) }];
            let mut t = vec![0.0; n];
            let mut tidx = vec![0usize; n];
            'tloop: loop {
                for d in 0..n {
                    t[d] = taxis.center(tidx[d]);
                }
                let y: Vec<f64> = (0..n).map(|d| x[d] + t[d]).collect();
                let offset: Vec<f64> = match mode {
                    OffsetMode::Direct(_) => {
                        (0..n).map(|i| (0..n).map(|k| ax[(i, k)] * t[k]).sum()).collect()
                    }
                    OffsetMode::Convolution(qq) => {
                        let qtt = qq.eval(&t, &t).unwrap();
                        let qyy = qq.eval(&y, &y).unwrap();
                        (0..n).map(|i| 0.5 * qyy[i] - 0.5 * qtt[i]).collect()
                    }
                };
                for b in boxes {
                    if !(0..n).all(|d| b[d].0 <= y[d] && y[d] <= b[d].1) {
                        continue;
                    }
                    // x' must lie in B2 - offset, componentwise
                    let ranges: Vec<std::ops::Range<usize>> = (0..n)
                        .map(|d| axis.cells_in(b[n + d].0 - offset[d], b[n + d].1 - offset[d]))
                        .collect();
                    if ranges.iter().any(|r| r.is_empty()) {
                        continue;
                    }
                    match n {
                        1 => {
                            diff[ranges[0].start] += 1;
                            diff[ranges[0].end] -= 1;
                        }
                        2 => {
                            let w = axis.count + 1;
                            let (r0, r1) = (&ranges[0], &ranges[1]);
                            diff[r0.start * w + r1.start] += 1;
                            diff[r0.start * w + r1.end] -= 1;
                            diff[r0.end * w + r1.start] -= 1;
                            diff[r0.end * w + r1.end] += 1;
                        }
                        _ => unreachable!(),
                    }
                }
                let mut d = 0;
                loop {
                    if d == n {
                        break 'tloop;
                    }
                    tidx[d] += 1;
                    if tidx[d] < taxis.count {
                        break;
                    }
                    tidx[d] = 0;
                    d += 1;
                }
            }
            // prefix-sum the counts and accumulate |T|^q in cell order
            let mut acc = 0.0f64;
            match n {
                1 => {
                    let mut run = 0i64;
                    for i in 0..axis.count {
                        run += diff[i];
                        if run > 0 {
                            acc += (cellpow * run as f64).powf(q_exp);
                        }
                    }
                }
                2 => {
                    let w = axis.count + 1;
                    let mut rows = vec![0i64; w];
                    for i in 0..axis.count {
                        let mut run = 0i64;
                        for j in 0..axis.count {
                            run += diff[i * w + j];
                            rows[j] += run;
                            if rows[j] > 0 {
                                acc += (cellpow * rows[j] as f64).powf(q_exp);
                            }
                        }
                    }
                }
                _ => unreachable!(),
            }
            acc
        })
        .collect();
    Ok(partials.iter().sum())
}

fn grid_lq_norm(
    f: &IndicatorSet,
    grid: &GridSpec,
    q_exp: f64,
    mode: &OffsetMode,
) -> Result<f64> {
    if q_exp < 1.0 {
        return Err(Error::Precondition("L^q norm needs q >= 1".into()));
    }
    let sum = grid_power_sum(f, grid, q_exp, mode)?;
    Ok((grid.h.powi(2 * grid.n as i32) * sum).powf(1.0 / q_exp))
}

/// `||T_Q chi_F||_q / |F|^{1/p}` over the full grid.
pub fn restricted_ratio(
    q: &BilinearMap<f64>,
    f: &IndicatorSet,
    p: f64,
    q_exp: f64,
    grid: &GridSpec,
) -> Result<f64> {
    grid.validate()?;
    if !q.is_square() || q.n_in() != grid.n {
        return Err(Error::Precondition("operator needs a square map matching the grid".into()));
    }
    let volume = f.volume();
    if volume <= 0.0 {
        return Err(Error::Precondition("restricted ratio needs |F| > 0".into()));
    }
    let norm = grid_lq_norm(f, grid, q_exp, &OffsetMode::Direct(q))?;
    Ok(norm / volume.powf(1.0 / p))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioEntry {
    pub delta: f64,
    pub norm: f64,
    pub volume: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub ratios: Vec<RatioEntry>,
    pub p: f64,
    pub q: f64,
    pub grid: GridSpec,
    pub seed: u64,
}

/// Anisotropic-box sweep: for each delta, `F = {|y| <= delta} x {|y'| <=
/// delta^2}` componentwise. Bounded ratios across the sweep signal the sharp
/// vertex; a monotone trend signals exponents outside the admissible range.
pub fn knapp_sweep(
    q: &BilinearMap<f64>,
    deltas: &[f64],
    p: f64,
    q_exp: f64,
    grid: &GridSpec,
) -> Result<BenchReport> {
    grid.validate()?;
    if deltas.is_empty() {
        return Err(Error::Precondition("empty delta list".into()));
    }
    // the anisotropic family must fit the grid without clipping: supports
    // reach 1 + delta in x and delta^2 + |Q|(1 + delta) in x'
    let coefsum: f64 = {
        let n = grid.n;
        let mut worst = 0.0f64;
        for d in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += q.coeff(d, j, k).abs();
                }
            }
            worst = worst.max(s);
        }
        worst
    };
    let mut ratios = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        if !(0.0 < delta && delta <= 1.0) {
            return Err(Error::Precondition(format!("delta {delta} outside (0, 1]")));
        }
        if delta < grid.h {
            return Err(Error::Resolution(format!(
                "delta {delta} is below the grid resolution h = {}",
                grid.h
            )));
        }
        let x_need = 1.0 + delta;
        let xp_need = delta * delta + coefsum * x_need;
        if grid.half_width < x_need.max(xp_need) {
            return Err(Error::Resolution(format!(
                "half_width {} clips the delta = {delta} family (needs {:.3})",
                grid.half_width,
                x_need.max(xp_need)
            )));
        }
        let mut b = vec![(-delta, delta); grid.n];
        b.extend(vec![(-delta * delta, delta * delta); grid.n]);
        let f = IndicatorSet::boxes(2 * grid.n, vec![b])?;
        let volume = f.volume();
        let norm = grid_lq_norm(&f, grid, q_exp, &OffsetMode::Direct(q))?;
        ratios.push(RatioEntry { delta, norm, volume, ratio: norm / volume.powf(1.0 / p) });
    }
    Ok(BenchReport { ratios, p, q: q_exp, grid: *grid, seed: 0 })
}

/// Count of nondegenerate solutions `x` of `Q(x, v) = c`: one when the
/// contraction `N(v)` is invertible (the solve is confirmed, and `trials`
/// random probes double-check uniqueness), zero otherwise.
pub fn multiplicity_check(
    q: &BilinearMap<f64>,
    c: &[f64],
    v: &[f64],
    trials: u64,
) -> Result<usize> {
    if !q.is_square() {
        return Err(Error::Precondition("multiplicity check needs a square map".into()));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::Precondition("direction v must be nonzero".into()));
    }
    if c.len() != q.n_out() || v.len() != q.n_in() {
        return Err(Error::Dimension("c and v must match the map dimensions".into()));
    }
    let n = q.contract_right(v)?;
    let scale: f64 = (0..n.rows).map(|i| n.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(1.0, f64::max);
    let det = n.det_lu()?;
    if det.abs() <= 1e-12 * scale.powi(n.rows as i32) {
        return Ok(0);
    }
    let x = n.solve(c)?;
    let qxv = q.eval(&x, v)?;
    let residual: f64 = qxv.iter().zip(c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if residual > 1e-8 * (1.0 + c.iter().map(|x| x.abs()).fold(0.0, f64::max)) {
        return Err(Error::Precondition(format!(
            "linear solve failed to reproduce c (residual {residual:.3e})"
        )));
    }
    let mut rng = crate::rng::CounterRng::substream(0x6d75_6c74, trials);
    for _ in 0..trials {
        let other: Vec<f64> = x.iter().map(|&xi| xi + rng.next_sym() + 2.0).collect();
        let val = q.eval(&other, v)?;
        let differs = val.iter().zip(c).any(|(a, b)| (a - b).abs() > 1e-9);
        if !differs {
            return Err(Error::Precondition(
                "probe found a second solution of an invertible system".into(),
            ));
        }
    }
    Ok(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilinear::{complex_multiplication, product_type, BilinearMap};

    fn scalar_map() -> BilinearMap<f64> {
        // n = 1, Q(x, t) = x t
        BilinearMap::from_nested(1, 1, vec![vec![vec![1.0]]]).unwrap()
    }

    fn grid(h: f64) -> GridSpec {
        GridSpec { n: 1, half_width: 4.0, h, t_spacing: h / 2.0 }
    }

    #[test]
    fn full_space_average_is_cube_volume() {
        let q = scalar_map();
        let g = GridSpec { n: 1, half_width: 2.0, h: 0.25, t_spacing: 1.0 / 128.0 };
        let f = IndicatorSet::boxes(2, vec![vec![(-50.0, 50.0), (-50.0, 50.0)]]).unwrap();
        let vals = apply_operator(
            &q,
            &f,
            &[(vec![0.0], vec![0.0]), (vec![1.5], vec![-0.5])],
            &g,
        )
        .unwrap();
        for v in vals {
            assert_eq!(v, 2.0, "everything-set average is the full t-volume 2^n");
        }
    }

    #[test]
    fn unit_box_at_origin() {
        let q = scalar_map();
        let g = GridSpec { n: 1, half_width: 2.0, h: 0.25, t_spacing: 1.0 / 256.0 };
        let f = IndicatorSet::boxes(2, vec![vec![(0.0, 1.0), (0.0, 1.0)]]).unwrap();
        // at (0, 0): x + t in [0,1] for t in [0,1], and Q(0,t) = 0 stays in F
        let vals = apply_operator(&q, &f, &[(vec![0.0], vec![0.0])], &g).unwrap();
        assert!((vals[0] - 1.0).abs() < 1.0 / 128.0, "got {}", vals[0]);
        // empty set gives zero everywhere
        let empty = IndicatorSet::boxes(2, vec![]).unwrap();
        let vals = apply_operator(&q, &empty, &[(vec![0.3], vec![0.1])], &g).unwrap();
        assert_eq!(vals[0], 0.0);
    }

    #[test]
    fn values_bounded_and_monotone_in_f() {
        let q = complex_multiplication();
        let g = GridSpec { n: 2, half_width: 2.0, h: 0.5, t_spacing: 0.25 };
        let small = IndicatorSet::boxes(4, vec![vec![(-0.5, 0.5); 4]]).unwrap();
        let large = IndicatorSet::boxes(4, vec![vec![(-1.5, 1.5); 4]]).unwrap();
        let points: Vec<(Vec<f64>, Vec<f64>)> = (0..16)
            .map(|k| {
                (
                    vec![-1.0 + 0.5 * (k % 4) as f64, 0.25],
                    vec![0.0, -1.0 + 0.5 * (k / 4) as f64],
                )
            })
            .collect();
        let a = apply_operator(&q, &small, &points, &g).unwrap();
        let b = apply_operator(&q, &large, &points, &g).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(*x >= 0.0 && *x <= 4.0 + 1e-12);
            assert!(x <= y, "monotone in the indicator set");
        }
    }

    #[test]
    fn lq_norm_unit_square_and_homogeneity() {
        let g = GridSpec { n: 1, half_width: 2.0, h: 1.0 / 16.0, t_spacing: 1.0 / 16.0 };
        // indicator of the unit square sampled on an aligned grid
        let axis = g.axis();
        let mut values = Vec::new();
        for i in 0..axis.count {
            for j in 0..axis.count {
                let x = axis.center(i);
                let y = axis.center(j);
                values.push(if (0.0..1.0).contains(&x) && (0.0..1.0).contains(&y) {
                    1.0
                } else {
                    0.0
                });
            }
        }
        let n3 = lq_norm(&values, 3.0, &g).unwrap();
        assert!((n3 - 1.0).abs() < 1e-12);
        let doubled: Vec<f64> = values.iter().map(|v| 2.0 * v).collect();
        let d3 = lq_norm(&doubled, 3.0, &g).unwrap();
        assert!((d3 - 2.0 * n3).abs() < 1e-12);
        assert_eq!(lq_norm(&[0.0, 0.0], 2.0, &g).unwrap(), 0.0);
        assert!(lq_norm(&values, 0.5, &g).is_err());
    }

    #[test]
    fn restricted_ratio_stable_under_refinement() {
        let q = scalar_map();
        let f = IndicatorSet::boxes(2, vec![vec![(-1.0, 1.0), (-1.0, 1.0)]]).unwrap();
        let coarse = restricted_ratio(&q, &f, 1.5, 3.0, &grid(1.0 / 64.0)).unwrap();
        let fine = restricted_ratio(&q, &f, 1.5, 3.0, &grid(1.0 / 128.0)).unwrap();
        assert!(
            (coarse - fine).abs() <= 0.02 * fine,
            "ratios {coarse} vs {fine} differ by more than 2%"
        );
        let empty = IndicatorSet::boxes(2, vec![]).unwrap();
        assert!(restricted_ratio(&q, &empty, 1.5, 3.0, &grid(1.0 / 64.0)).is_err());
    }

    #[test]
    fn x_prime_translation_leaves_norms_unchanged() {
        let q = scalar_map();
        let g = grid(1.0 / 64.0);
        let f = IndicatorSet::boxes(2, vec![vec![(-0.5, 0.5), (-0.25, 0.25)]]).unwrap();
        let shift = 32.0 * g.h; // exact grid multiple
        let f2 =
            IndicatorSet::boxes(2, vec![vec![(-0.5, 0.5), (-0.25 + shift, 0.25 + shift)]]).unwrap();
        let a = restricted_ratio(&q, &f, 1.5, 3.0, &g).unwrap();
        let b = restricted_ratio(&q, &f2, 1.5, 3.0, &g).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn knapp_delta_one_matches_restricted_ratio() {
        let q = scalar_map();
        let g = grid(1.0 / 64.0);
        let report = knapp_sweep(&q, &[1.0], 1.5, 3.0, &g).unwrap();
        let f = IndicatorSet::boxes(2, vec![vec![(-1.0, 1.0), (-1.0, 1.0)]]).unwrap();
        let direct = restricted_ratio(&q, &f, 1.5, 3.0, &g).unwrap();
        assert_eq!(report.ratios[0].ratio.to_bits(), direct.to_bits());
        assert_eq!(report.ratios[0].volume, 4.0);
    }

    #[test]
    fn knapp_rejects_unresolvable_delta() {
        let q = scalar_map();
        let g = grid(1.0 / 32.0);
        match knapp_sweep(&q, &[1.0 / 64.0], 1.5, 3.0, &g) {
            Err(Error::Resolution(_)) => {}
            other => panic!("expected resolution error, got {other:?}"),
        }
        assert!(knapp_sweep(&q, &[1.5], 1.5, 3.0, &g).is_err());
    }

    #[test]
    fn clipping_grid_is_rejected() {
        let q = scalar_map();
        let g = GridSpec { n: 1, half_width: 1.0, h: 1.0 / 32.0, t_spacing: 1.0 / 32.0 };
        let f = IndicatorSet::boxes(2, vec![vec![(-1.0, 1.0), (-1.0, 1.0)]]).unwrap();
        match restricted_ratio(&q, &f, 1.5, 3.0, &g) {
            Err(Error::Resolution(msg)) => assert!(msg.contains("clips")),
            other => panic!("expected clipping error, got {other:?}"),
        }
    }

    #[test]
    fn high_dimension_refused_with_cost_estimate() {
        let g = GridSpec { n: 3, half_width: 2.0, h: 0.01, t_spacing: 0.01 };
        match g.validate() {
            Err(Error::Resolution(msg)) => assert!(msg.contains("cell grid")),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn multiplicity_examples() {
        let q = complex_multiplication();
        assert_eq!(multiplicity_check(&q, &[1.0, 1.0], &[1.0, 0.0], 20).unwrap(), 1);
        let p = product_type(2);
        assert_eq!(multiplicity_check(&p, &[0.5, 0.5], &[1.0, 0.0], 20).unwrap(), 0);
        assert!(multiplicity_check(&q, &[1.0, 1.0], &[0.0, 0.0], 20).is_err());
    }

    #[test]
    fn shear_check_scalar_map() {
        let q = scalar_map();
        let g = GridSpec { n: 1, half_width: 4.0, h: 1.0 / 64.0, t_spacing: 1.0 / 128.0 };
        let f = IndicatorSet::boxes(2, vec![vec![(-0.6, 0.8), (-0.4, 0.5)]]).unwrap();
        let (direct, sheared, pass) = shear_check(&q, &f, 1.5, 3.0, &g).unwrap();
        assert!(pass, "direct {direct} vs sheared {sheared}");
        // agreement tightens as the grid refines
        let g2 = GridSpec { h: 1.0 / 128.0, t_spacing: 1.0 / 256.0, ..g };
        let (d2, s2, pass2) = shear_check(&q, &f, 1.5, 3.0, &g2).unwrap();
        assert!(pass2);
        assert!((d2 - s2).abs() / d2 <= (direct - sheared).abs() / direct + 0.01);
    }

    #[test]
    fn shear_check_everything_exact_and_rejects_asymmetric() {
        // wide enough in x' that neither path's offset ever binds, so the
        // membership tests coincide pointwise
        let q = scalar_map();
        let g = GridSpec { n: 1, half_width: 32.0, h: 0.5, t_spacing: 0.125 };
        let f = IndicatorSet::boxes(2, vec![vec![(-0.5, 0.5), (-30.0, 30.0)]]).unwrap();
        let (direct, sheared, pass) = shear_check(&q, &f, 1.5, 3.0, &g).unwrap();
        assert!(pass);
        assert_eq!(direct.to_bits(), sheared.to_bits());
        let asym = BilinearMap::from_nested(
            2,
            2,
            vec![
                vec![vec![0.0, 1.0], vec![0.0, 0.0]],
                vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            ],
        )
        .unwrap();
        let g2 = GridSpec { n: 2, half_width: 4.0, h: 0.5, t_spacing: 0.5 };
        let f2 = IndicatorSet::boxes(4, vec![vec![(-0.5, 0.5); 4]]).unwrap();
        assert!(shear_check(&asym, &f2, 1.5, 3.0, &g2).is_err());
    }

    #[test]
    fn mask_membership_and_volume() {
        let mask = GridMask {
            origin: (0.0, 0.0),
            h: 0.5,
            rows: 2,
            cols: 2,
            cells: vec![true, false, false, true],
        };
        let f = IndicatorSet::mask(mask).unwrap();
        assert!(f.contains(&[0.25, 0.25]));
        assert!(!f.contains(&[0.75, 0.25]));
        assert!(!f.contains(&[-0.1, 0.25]));
        assert!((f.volume() - 0.5).abs() < 1e-12);
    }
}

/// Norm of `T_Q chi_F` computed directly and through the volume-preserving
/// shear that turns a symmetric-map operator into a convolution; the two
/// agree up to discretization.
pub fn shear_check(
    q: &BilinearMap<f64>,
    f: &IndicatorSet,
    _p: f64,
    q_exp: f64,
    grid: &GridSpec,
) -> Result<(f64, f64, bool)> {
    grid.validate()?;
    if !q.is_square() || q.n_in() != grid.n {
        return Err(Error::Precondition("shear check needs a square map matching the grid".into()));
    }
    if !q.is_symmetric() {
        return Err(Error::Precondition("shear check needs a symmetric map".into()));
    }
    let direct = grid_lq_norm(f, grid, q_exp, &OffsetMode::Direct(q))?;
    let sheared = grid_lq_norm(f, grid, q_exp, &OffsetMode::Convolution(q))?;
    let pass = if direct == 0.0 && sheared == 0.0 {
        true
    } else {
        (direct - sheared).abs() <= 0.05 * direct.max(sheared)
    };
    Ok((direct, sheared, pass))
}
