//! Periodic space-time lattice: grid geometry, parabolic distance and
//! cylinders, vector-valued fields, and the discrete L2 / Linf / V2 norms.
//!
//! The whole space is modeled by a torus of side `L`; all spatial metric
//! queries use the minimum-image convention, which keeps Gaussian tails
//! meaningful up to half the box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic space-time grid.
///
/// Spatial dimension `n` is 1 or 2; every axis carries `nx` cells of width
/// `h = l / nx` with periodic identification; time levels are uniform with
/// step `dt` on `[t0, t1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub m: usize,
    pub l: f64,
    pub nx: usize,
    pub h: f64,
    pub dt: f64,
    pub t0: f64,
    pub t1: f64,
    num_levels: usize,
}

impl Grid {
    pub fn new(n: usize, m: usize, l: f64, nx: usize, dt: f64, t0: f64, t1: f64) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::ConfigError(format!("spatial dimension must be 1 or 2, got {n}")));
        }
        if m == 0 {
            return Err(Error::ConfigError("system size m must be >= 1".into()));
        }
        if !(l > 0.0) || !(dt > 0.0) || !(t1 > t0) {
            return Err(Error::ConfigError("need L > 0, dt > 0, T1 > T0".into()));
        }
        if nx < 8 || !nx.is_power_of_two() {
            return Err(Error::ConfigError(format!("Nx must be a power of two >= 8, got {nx}")));
        }
        let steps = ((t1 - t0) / dt).round() as usize;
        if steps == 0 || ((t1 - t0) / dt - steps as f64).abs() > 1e-8 {
            return Err(Error::ConfigError(format!(
                "time range ({t0}, {t1}) is not an integer number of steps dt = {dt}"
            )));
        }
        Ok(Grid { n, m, l, nx, h: l / nx as f64, dt, t0, t1, num_levels: steps + 1 })
    }

    pub fn num_nodes(&self) -> usize {
        self.nx.pow(self.n as u32)
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn level_time(&self, level: usize) -> f64 {
        self.t0 + level as f64 * self.dt
    }

    /// Nearest grid level to `t`; errors when `t` is not on a level.
    pub fn level_of_time(&self, t: f64) -> Result<usize> {
        let j = ((t - self.t0) / self.dt).round();
        if j < 0.0 || j as usize >= self.num_levels {
            return Err(Error::TimeRangeError(format!("time {t} outside [{}, {}]", self.t0, self.t1)));
        }
        if (t - (self.t0 + j * self.dt)).abs() > 1e-8 * self.dt.max(1.0) {
            return Err(Error::TimeRangeError(format!("time {t} is not on a grid level")));
        }
        Ok(j as usize)
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        match self.n {
            1 => [node as f64 * self.h, 0.0],
            _ => {
                let ix = node % self.nx;
                let iy = node / self.nx;
                [ix as f64 * self.h, iy as f64 * self.h]
            }
        }
    }

    /// Neighbor of `node` shifted by `offset` cells along `axis`, with wrap.
    pub fn shift(&self, node: usize, axis: usize, offset: isize) -> usize {
        let nx = self.nx as isize;
        let wrap = |i: isize| -> usize { (((i % nx) + nx) % nx) as usize };
        match self.n {
            1 => wrap(node as isize + offset),
            _ => {
                let ix = (node % self.nx) as isize;
                let iy = (node / self.nx) as isize;
                if axis == 0 {
                    wrap(ix + offset) + self.nx * iy as usize
                } else {
                    ix as usize + self.nx * wrap(iy + offset)
                }
            }
        }
    }

    /// Minimum-image signed difference `a - b` on one axis.
    pub fn torus_delta(&self, a: f64, b: f64) -> f64 {
        let mut d = (a - b) % self.l;
        if d > self.l / 2.0 {
            d -= self.l;
        } else if d < -self.l / 2.0 {
            d += self.l;
        }
        d
    }

    /// Minimum-image Euclidean distance between spatial points.
    pub fn torus_dist(&self, x: &[f64; 2], y: &[f64; 2]) -> f64 {
        let mut s = 0.0;
        for axis in 0..self.n {
            let d = self.torus_delta(x[axis], y[axis]);
            s += d * d;
        }
        s.sqrt()
    }
}

/// A point (t, x) of space-time; for n = 1 the second spatial slot is unused.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub x: [f64; 2],
}

impl SpaceTimePoint {
    pub fn new(t: f64, x: [f64; 2]) -> Self {
        SpaceTimePoint { t, x }
    }
}

/// Parabolic distance max(sqrt|t-s|, dist(x, y)) with the toroidal metric.
pub fn parabolic_distance(grid: &Grid, a: &SpaceTimePoint, b: &SpaceTimePoint) -> f64 {
    (a.t - b.t).abs().sqrt().max(grid.torus_dist(&a.x, &b.x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CylinderKind {
    /// (t0 - r^2, t0] x B_r
    Backward,
    /// [t0, t0 + r^2) x B_r
    Forward,
    /// (t0 - r^2, t0 + r^2) x B_r
    TwoSided,
}

/// Space-time cylinder centered at `center` with parabolic radius `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicCylinder {
    pub center: SpaceTimePoint,
    pub r: f64,
    pub kind: CylinderKind,
}

impl ParabolicCylinder {
    pub fn backward(center: SpaceTimePoint, r: f64) -> Self {
        ParabolicCylinder { center, r, kind: CylinderKind::Backward }
    }

    pub fn forward(center: SpaceTimePoint, r: f64) -> Self {
        ParabolicCylinder { center, r, kind: CylinderKind::Forward }
    }

    pub fn two_sided(center: SpaceTimePoint, r: f64) -> Self {
        ParabolicCylinder { center, r, kind: CylinderKind::TwoSided }
    }

    /// Membership of a space-time point; grid nodes snap by this predicate.
    pub fn contains(&self, grid: &Grid, p: &SpaceTimePoint) -> bool {
        self.contains_time(p.t) && grid.torus_dist(&p.x, &self.center.x) < self.r
    }

    pub fn contains_time(&self, t: f64) -> bool {
        let t0 = self.center.t;
        let r2 = self.r * self.r;
        match self.kind {
            CylinderKind::Backward => t > t0 - r2 && t <= t0,
            CylinderKind::Forward => t >= t0 && t < t0 + r2,
            CylinderKind::TwoSided => t > t0 - r2 && t < t0 + r2,
        }
    }

    pub fn resolvable(&self, grid: &Grid) -> bool {
        self.r >= 2.0 * grid.h && self.r * self.r >= 2.0 * grid.dt
    }
}

/// Grid nodes covered by a cylinder, as (level, node) pairs in level-major
/// order. The discrete measure is `count * h^n * dt`.
pub fn cylinder_indices(q: &ParabolicCylinder, grid: &Grid) -> Result<Vec<(usize, usize)>> {
    if !q.resolvable(grid) {
        return Err(Error::UnresolvableCylinder { r: q.r });
    }
    let nodes = spatial_ball_nodes(grid, &q.center.x, q.r);
    let mut out = Vec::new();
    for level in 0..grid.num_levels() {
        if !q.contains_time(grid.level_time(level)) {
            continue;
        }
        for &node in &nodes {
            out.push((level, node));
        }
    }
    Ok(out)
}

/// Spatial nodes strictly inside the toroidal ball B_r(center).
pub fn spatial_ball_nodes(grid: &Grid, center: &[f64; 2], r: f64) -> Vec<usize> {
    let mut nodes = Vec::new();
    for node in 0..grid.num_nodes() {
        let x = grid.node_coords(node);
        if grid.torus_dist(&x, center) < r {
            nodes.push(node);
        }
    }
    nodes
}

/// Region selector for norm computations.
#[derive(Debug, Clone, Copy)]
pub enum Region {
    Whole,
    Inside(ParabolicCylinder),
    Outside(ParabolicCylinder),
}

impl Region {
    pub fn contains(&self, grid: &Grid, p: &SpaceTimePoint) -> bool {
        match self {
            Region::Whole => true,
            Region::Inside(q) => q.contains(grid, p),
            Region::Outside(q) => !q.contains(grid, p),
        }
    }
}

/// One real m-vector per spatial node at a fixed time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceField {
    pub m: usize,
    pub data: Vec<f64>,
}

impl SpaceField {
    pub fn zeros(grid: &Grid) -> Self {
        SpaceField { m: grid.m, data: vec![0.0; grid.num_nodes() * grid.m] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64; 2], usize) -> f64) -> Self {
        let mut field = SpaceField::zeros(grid);
        for node in 0..grid.num_nodes() {
            let x = grid.node_coords(node);
            for comp in 0..grid.m {
                field.data[node * grid.m + comp] = f(&x, comp);
            }
        }
        field
    }

    #[inline]
    pub fn get(&self, node: usize, comp: usize) -> f64 {
        self.data[node * self.m + comp]
    }

    #[inline]
    pub fn set(&mut self, node: usize, comp: usize, v: f64) {
        self.data[node * self.m + comp] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A SpaceField per time level over the full grid range.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    pub m: usize,
    pub levels: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &Grid) -> Self {
        SpaceTimeField {
            m: grid.m,
            levels: vec![vec![0.0; grid.num_nodes() * grid.m]; grid.num_levels()],
        }
    }

    #[inline]
    pub fn get(&self, level: usize, node: usize, comp: usize) -> f64 {
        self.levels[level][node * self.m + comp]
    }

    pub fn level(&self, level: usize) -> &[f64] {
        &self.levels[level]
    }

    pub fn level_mut(&mut self, level: usize) -> &mut [f64] {
        &mut self.levels[level]
    }
}

/// L2, Linf and V2 norms of a space-time field over a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub linf: f64,
    pub v2: f64,
}

/// Computes the region norms. V2 combines the centered-difference gradient
/// integral with the largest per-level spatial L2 norm over the region.
pub fn field_norms(grid: &Grid, u: &SpaceTimeField, region: Region) -> Result<Norms> {
    if let Region::Inside(q) | Region::Outside(q) = region {
        if !q.resolvable(grid) {
            return Err(Error::UnresolvableCylinder { r: q.r });
        }
    }
    let hn = grid.h.powi(grid.n as i32);
    let mut l2_sq = 0.0;
    let mut linf = 0.0f64;
    let mut grad_sq = 0.0;
    let mut max_slice_sq = 0.0f64;
    let inv_2h = 1.0 / (2.0 * grid.h);
    for level in 0..grid.num_levels() {
        let t = grid.level_time(level);
        let vals = u.level(level);
        let mut slice_sq = 0.0;
        let mut any = false;
        for node in 0..grid.num_nodes() {
            let x = grid.node_coords(node);
            if !region.contains(grid, &SpaceTimePoint::new(t, x)) {
                continue;
            }
            any = true;
            for comp in 0..grid.m {
                let v = vals[node * grid.m + comp];
                slice_sq += v * v * hn;
                linf = linf.max(v.abs());
                for axis in 0..grid.n {
                    let fp = vals[grid.shift(node, axis, 1) * grid.m + comp];
                    let fm = vals[grid.shift(node, axis, -1) * grid.m + comp];
                    let g = (fp - fm) * inv_2h;
                    grad_sq += g * g * hn * grid.dt;
                }
            }
        }
        if any {
            l2_sq += slice_sq * grid.dt;
            max_slice_sq = max_slice_sq.max(slice_sq);
        }
    }
    Ok(Norms { l2: l2_sq.sqrt(), linf, v2: (grad_sq + max_slice_sq).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1d() -> Grid {
        Grid::new(1, 1, 1.0, 64, 1.0 / 1024.0, 0.0, 0.25).unwrap()
    }

    #[test]
    fn parabolic_distance_formula_cases() {
        let g = Grid::new(2, 1, 100.0, 64, 0.01, 0.0, 1.0).unwrap();
        let x = SpaceTimePoint::new(4.0, [0.0, 0.0]);
        let y = SpaceTimePoint::new(0.0, [1.0, 0.0]);
        assert_eq!(parabolic_distance(&g, &x, &y), 2.0);
        assert_eq!(parabolic_distance(&g, &x, &x), 0.0);

        let g1 = Grid::new(1, 1, 4.0, 64, 0.01, 0.0, 1.0).unwrap();
        let a = SpaceTimePoint::new(1.21, [0.0, 0.0]);
        let b = SpaceTimePoint::new(1.0, [0.5, 0.0]);
        assert!((parabolic_distance(&g1, &a, &b) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cylinder_indices_match_brute_force_scan() {
        let g = grid_1d();
        let q = ParabolicCylinder::backward(SpaceTimePoint::new(0.2, [0.5, 0.0]), 0.25);
        let fast = cylinder_indices(&q, &g).unwrap();
        let mut brute = Vec::new();
        for level in 0..g.num_levels() {
            let t = g.level_time(level);
            for node in 0..g.num_nodes() {
                let x = g.node_coords(node);
                if q.contains(&g, &SpaceTimePoint::new(t, x)) {
                    brute.push((level, node));
                }
            }
        }
        assert_eq!(fast, brute);
        assert!(!fast.is_empty());
    }

    #[test]
    fn cylinder_measure_converges_to_continuum() {
        // two-sided cylinder with r = L/2 on a fine 1-D grid
        let g = Grid::new(1, 1, 1.0, 256, 1.0 / 8192.0, 0.0, 0.5).unwrap();
        let q = ParabolicCylinder::two_sided(SpaceTimePoint::new(0.25, [0.5, 0.0]), 0.5);
        let count = cylinder_indices(&q, &g).unwrap().len();
        let measure = count as f64 * g.h * g.dt;
        let exact = 2.0 * q.r * q.r * (2.0 * q.r); // 2 r^2 * |B_r|
        assert!(
            (measure - exact).abs() / exact < 0.02,
            "measure {measure} vs exact {exact}"
        );
    }

    #[test]
    fn cylinder_near_resolution_limit() {
        // dt fine enough that the spatial constraint r >= 2h binds first
        let g = Grid::new(1, 1, 1.0, 64, 1.0 / 4096.0, 0.0, 0.25).unwrap();
        let q = ParabolicCylinder::backward(
            SpaceTimePoint::new(0.2, [0.5, 0.0]),
            2.0 * g.h + 1e-9,
        );
        assert!(!cylinder_indices(&q, &g).unwrap().is_empty());
        let too_small = ParabolicCylinder::backward(SpaceTimePoint::new(0.2, [0.5, 0.0]), g.h);
        assert!(matches!(
            cylinder_indices(&too_small, &g),
            Err(Error::UnresolvableCylinder { .. })
        ));
    }

    #[test]
    fn norms_zero_and_constant_fields() {
        let g = grid_1d();
        let zero = SpaceTimeField::zeros(&g);
        let norms = field_norms(&g, &zero, Region::Whole).unwrap();
        assert_eq!((norms.l2, norms.linf, norms.v2), (0.0, 0.0, 0.0));

        let c = 3.0;
        let mut constant = SpaceTimeField::zeros(&g);
        for level in 0..g.num_levels() {
            constant.level_mut(level).fill(c);
        }
        let norms = field_norms(&g, &constant, Region::Whole).unwrap();
        assert_eq!(norms.linf, c);
        // V2 of a constant: gradient vanishes, slice norm is |c| * L^(n/2)
        assert!((norms.v2 - c * g.l.powf(g.n as f64 / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn gradient_norm_matches_closed_form_for_sine() {
        let g = Grid::new(1, 1, 1.0, 256, 1.0 / 1024.0, 0.0, 0.25).unwrap();
        let mut u = SpaceTimeField::zeros(&g);
        for level in 0..g.num_levels() {
            for node in 0..g.num_nodes() {
                let x = g.node_coords(node)[0];
                u.level_mut(level)[node] = (2.0 * std::f64::consts::PI * x / g.l).sin();
            }
        }
        let norms = field_norms(&g, &u, Region::Whole).unwrap();
        // ||D u||_{L2} over duration T: (2 pi / L) sqrt(L / 2) sqrt(T)
        let duration = (g.num_levels() as f64) * g.dt;
        let exact = (2.0 * std::f64::consts::PI / g.l) * (g.l / 2.0).sqrt() * duration.sqrt();
        // slice norm of sin is sqrt(L/2); strip it off V2 to isolate the gradient part
        let grad_sq = norms.v2 * norms.v2 - g.l / 2.0;
        assert!(
            (grad_sq.sqrt() - exact).abs() / exact < 2e-4,
            "grad {} vs exact {exact}",
            grad_sq.sqrt()
        );
    }

    #[test]
    fn v2_monotone_under_region_inclusion() {
        let g = grid_1d();
        let mut u = SpaceTimeField::zeros(&g);
        for level in 0..g.num_levels() {
            for node in 0..g.num_nodes() {
                let x = g.node_coords(node)[0];
                u.level_mut(level)[node] = (7.0 * x).sin() + 0.3 * (13.0 * x).cos();
            }
        }
        let small = ParabolicCylinder::two_sided(SpaceTimePoint::new(0.125, [0.5, 0.0]), 0.125);
        let big = ParabolicCylinder::two_sided(SpaceTimePoint::new(0.125, [0.5, 0.0]), 0.25);
        let ns = field_norms(&g, &u, Region::Inside(small)).unwrap();
        let nb = field_norms(&g, &u, Region::Inside(big)).unwrap();
        let nw = field_norms(&g, &u, Region::Whole).unwrap();
        assert!(ns.v2 <= nb.v2 + 1e-14);
        assert!(nb.v2 <= nw.v2 + 1e-14);
    }
}
