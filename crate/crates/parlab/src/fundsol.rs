//! Averaged fundamental solution columns and the estimate probes around
//! them: energy scaling in the averaging radius, the duality identity
//! against the adjoint solve, pointwise decay in the parabolic distance,
//! annulus decay, and the semigroup composition check. Closed-form periodic
//! kernels for constant-coefficient presets serve as oracles.

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::evolve::{level_inner, solve_adjoint, solve_cauchy, Propagator, RunStats, SolverParams};
use crate::lattice::{
    cylinder_indices, field_norms, parabolic_distance, Grid, ParabolicCylinder, Region,
    SpaceField, SpaceTimeField, SpaceTimePoint,
};
use crate::numerics::linear_fit;

/// Source cylinder description for one column: point Y = (s, y), component
/// k, and the averaging radius.
#[derive(Debug, Clone, Copy)]
pub struct SourceSpec {
    pub y: SpaceTimePoint,
    pub k: usize,
    pub eps: f64,
}

impl SourceSpec {
    pub fn new(y: SpaceTimePoint, k: usize, eps: f64) -> Self {
        SourceSpec { y, k, eps }
    }

    /// Backward cylinder carrying the source average.
    pub fn cylinder(&self) -> ParabolicCylinder {
        ParabolicCylinder::backward(self.y, self.eps)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.k >= grid.m {
            return Err(Error::SourceOutOfRange(format!(
                "column index {} for m = {}",
                self.k, grid.m
            )));
        }
        if !self.cylinder().resolvable(grid) {
            return Err(Error::UnresolvableCylinder { r: self.eps });
        }
        let s = self.y.t;
        let e2 = self.eps * self.eps;
        if s - e2 < grid.t0 - 1e-12 || s > grid.t1 + 1e-12 {
            return Err(Error::SourceOutOfRange(format!(
                "source window ({}, {}] leaves the time range [{}, {}]",
                s - e2,
                s,
                grid.t0,
                grid.t1
            )));
        }
        grid.level_of_time(s)?;
        Ok(())
    }

    /// Grid entries (level, node) carrying source forcing.
    pub fn source_indices(&self, grid: &Grid) -> Result<Vec<(usize, usize)>> {
        self.validate(grid)?;
        cylinder_indices(&self.cylinder(), grid)
    }
}

/// One column of the averaged fundamental solution, stored over the whole
/// grid (zero before the source window).
#[derive(Debug, Clone)]
pub struct FundSolColumn {
    pub source: SourceSpec,
    pub field: SpaceTimeField,
    pub stats: RunStats,
}

impl FundSolColumn {
    pub fn value(&self, level: usize, node: usize, comp: usize) -> f64 {
        self.field.get(level, node, comp)
    }
}

/// Per-level forcing of the column problem: the indicator of the source
/// cylinder scaled so its discrete space-time integral is exactly 1.
struct ColumnSource {
    by_level: Vec<Vec<usize>>,
    first_level: usize,
    last_level: usize,
    weight: f64,
    k: usize,
}

impl ColumnSource {
    fn build(grid: &Grid, src: &SourceSpec) -> Result<Self> {
        let indices = src.source_indices(grid)?;
        let mut by_level = vec![Vec::new(); grid.num_levels()];
        for &(level, node) in &indices {
            by_level[level].push(node);
        }
        let first_level = indices.iter().map(|&(l, _)| l).min().unwrap();
        let last_level = indices.iter().map(|&(l, _)| l).max().unwrap();
        if first_level == 0 {
            return Err(Error::SourceOutOfRange(
                "source window needs one level of zero state before it".into(),
            ));
        }
        let hn = grid.h.powi(grid.n as i32);
        let weight = 1.0 / (indices.len() as f64 * hn * grid.dt);
        Ok(ColumnSource { by_level, first_level, last_level, weight, k: src.k })
    }

    fn fill(&self, grid: &Grid, level: usize, out: &mut [f64]) {
        for &node in &self.by_level[level] {
            out[node * grid.m + self.k] = self.weight;
        }
    }
}

/// Computes the column streaming level by level; the observer sees every
/// level from just before the source window to `end_level`.
pub fn averaged_fundsol_stream(
    coeffs: &CoefficientSet,
    src: &SourceSpec,
    end_level: usize,
    params: SolverParams,
    observe: impl FnMut(usize, &[f64]),
) -> Result<RunStats> {
    let grid = &coeffs.grid;
    let source = ColumnSource::build(grid, src)?;
    if end_level < source.last_level {
        return Err(Error::TimeRangeError(format!(
            "end level {end_level} precedes the source window"
        )));
    }
    let prop = Propagator::with_params(coeffs, params);
    let init = vec![0.0; grid.num_nodes() * grid.m];
    prop.march_forward(
        source.first_level - 1,
        end_level,
        &init,
        |level, out| source.fill(grid, level, out),
        observe,
    )
}

/// Computes and stores one column up to `end_time`.
pub fn averaged_fundsol(
    coeffs: &CoefficientSet,
    src: &SourceSpec,
    end_time: f64,
    params: SolverParams,
) -> Result<FundSolColumn> {
    let grid = &coeffs.grid;
    let end_level = grid.level_of_time(end_time)?;
    let mut field = SpaceTimeField::zeros(grid);
    let stats = averaged_fundsol_stream(coeffs, src, end_level, params, |level, state| {
        field.level_mut(level).copy_from_slice(state);
    })?;
    Ok(FundSolColumn { source: *src, field, stats })
}

/// Both sides of the representation identity: the column paired with a
/// forcing versus the source-cylinder average of the adjoint solution.
/// Returns |LHS - RHS| / max(|LHS|, |RHS|, floor).
pub fn duality_check(
    coeffs: &CoefficientSet,
    src: &SourceSpec,
    f: &SpaceTimeField,
    params: SolverParams,
) -> Result<f64> {
    let column = averaged_fundsol(coeffs, src, coeffs.grid.t1, params)?;
    duality_residual(coeffs, &column, f, params)
}

/// Same check against an already computed column (the column side of the
/// identity does not depend on f).
pub fn duality_residual(
    coeffs: &CoefficientSet,
    column: &FundSolColumn,
    f: &SpaceTimeField,
    params: SolverParams,
) -> Result<f64> {
    let grid = &coeffs.grid;
    let src = &column.source;
    let mut lhs = 0.0;
    for level in 1..grid.num_levels() {
        lhs += grid.dt * level_inner(grid, column.field.level(level), f.level(level));
    }
    let (u, _) = solve_adjoint(coeffs, f, grid.t1, params)?;
    let indices = src.source_indices(grid)?;
    let mut rhs = 0.0;
    for &(level, node) in &indices {
        rhs += u.get(level, node, src.k);
    }
    rhs /= indices.len() as f64;
    let floor = 1e-3;
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(floor))
}

/// Supremum of |column| * |X - Y|_p^n over grid points with
/// min_dist <= |X - Y|_p <= L/4, the empirical constant of the pointwise
/// bound. Callers comparing columns of different widths should pass the same
/// min_dist (at least 3 eps of the widest) so both suprema range over the
/// same probe set.
pub fn pointwise_bound_probe(
    grid: &Grid,
    column: &FundSolColumn,
    min_dist: f64,
) -> Result<f64> {
    let y = column.source.y;
    if min_dist < 3.0 * column.source.eps {
        return Err(Error::ProbeOutOfRange(
            "min_dist must be at least 3 eps".into(),
        ));
    }
    let mut sup: f64 = 0.0;
    let mut used = 0usize;
    for level in 0..grid.num_levels() {
        let t = grid.level_time(level);
        for node in 0..grid.num_nodes() {
            let p = SpaceTimePoint::new(t, grid.node_coords(node));
            let d = parabolic_distance(grid, &p, &y);
            if d < min_dist || d > grid.l / 4.0 {
                continue;
            }
            used += 1;
            for comp in 0..grid.m {
                sup = sup.max(column.value(level, node, comp).abs() * d.powi(grid.n as i32));
            }
        }
    }
    if used == 0 {
        return Err(Error::ProbeOutOfRange(
            "no grid points satisfy min_dist <= |X-Y|_p <= L/4".into(),
        ));
    }
    Ok(sup)
}

/// Least-squares slope of log |||v_eps||| against log eps; expected near
/// -n/2. Returns the slope and the sampled (eps, norm) pairs.
pub fn energy_scaling_probe(
    coeffs: &CoefficientSet,
    y: SpaceTimePoint,
    k: usize,
    eps_list: &[f64],
    end_time: f64,
    params: SolverParams,
) -> Result<(f64, Vec<(f64, f64)>)> {
    if eps_list.len() < 3 {
        return Err(Error::RangeError(format!(
            "energy scaling needs at least 3 radii, got {}",
            eps_list.len()
        )));
    }
    let grid = &coeffs.grid;
    let mut points = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let src = SourceSpec::new(y, k, eps);
        let column = averaged_fundsol(coeffs, &src, end_time, params)?;
        let norms = field_norms(grid, &column.field, Region::Whole)?;
        points.push((eps, norms.v2));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (_, slope, _) = linear_fit(&xs, &ys)?;
    Ok((slope, points))
}

/// One row of the annulus-decay table.
#[derive(Debug, Clone, Copy)]
pub struct DecayEntry {
    pub r: f64,
    /// R^{n/2} times the V2-type norm of the column outside Q_R(Y).
    pub weighted_norm: f64,
}

/// Streaming accumulator for V2-type norms outside a family of two-sided
/// cylinders around the source point. Feed spatial levels in any order.
pub struct DecayAccumulator {
    y: SpaceTimePoint,
    rs: Vec<f64>,
    outside_node: Vec<Vec<bool>>,
    grad_sq: Vec<f64>,
    max_l2_sq: Vec<f64>,
    n: usize,
}

impl DecayAccumulator {
    pub fn new(grid: &Grid, y: SpaceTimePoint, eps: f64, rs: &[f64]) -> Result<Self> {
        for &r in rs {
            if r < 12.0 * eps * (1.0 - 1e-12) || r > grid.l / 4.0 * (1.0 + 1e-12) {
                return Err(Error::RangeError(format!(
                    "decay radius {r} outside [12 eps, L/4] = [{}, {}]",
                    12.0 * eps,
                    grid.l / 4.0
                )));
            }
        }
        let outside_node = rs
            .iter()
            .map(|&r| {
                (0..grid.num_nodes())
                    .map(|node| grid.torus_dist(&grid.node_coords(node), &y.x) >= r)
                    .collect()
            })
            .collect();
        Ok(DecayAccumulator {
            y,
            rs: rs.to_vec(),
            outside_node,
            grad_sq: vec![0.0; rs.len()],
            max_l2_sq: vec![0.0; rs.len()],
            n: rs.len(),
        })
    }

    pub fn feed(&mut self, grid: &Grid, level: usize, state: &[f64]) {
        let t = grid.level_time(level);
        let hn = grid.h.powi(grid.n as i32);
        let m = grid.m;
        for ri in 0..self.n {
            let r = self.rs[ri];
            let in_time = (t - self.y.t).abs() < r * r;
            let mut l2 = 0.0;
            let mut grad = 0.0;
            for node in 0..grid.num_nodes() {
                // outside Q_R: either outside the time slab or outside the ball
                if in_time && !self.outside_node[ri][node] {
                    continue;
                }
                for comp in 0..m {
                    let v = state[node * m + comp];
                    l2 += v * v;
                    for alpha in 0..grid.n {
                        let up = grid.shift(node, alpha, 1);
                        let down = grid.shift(node, alpha, -1);
                        let d = (state[up * m + comp] - state[down * m + comp]) / (2.0 * grid.h);
                        grad += d * d;
                    }
                }
            }
            self.grad_sq[ri] += grad * hn * grid.dt;
            self.max_l2_sq[ri] = self.max_l2_sq[ri].max(l2 * hn);
        }
    }

    pub fn table(&self, grid: &Grid) -> Vec<DecayEntry> {
        let half_n = grid.n as f64 / 2.0;
        self.rs
            .iter()
            .enumerate()
            .map(|(ri, &r)| DecayEntry {
                r,
                weighted_norm: r.powf(half_n) * (self.grad_sq[ri] + self.max_l2_sq[ri]).sqrt(),
            })
            .collect()
    }
}

/// Computes the decay table for one column without storing the space-time
/// field (single forward march).
pub fn decay_probe(
    coeffs: &CoefficientSet,
    src: &SourceSpec,
    rs: &[f64],
    end_time: f64,
    params: SolverParams,
) -> Result<Vec<DecayEntry>> {
    let grid = &coeffs.grid;
    let mut acc = DecayAccumulator::new(grid, src.y, src.eps, rs)?;
    let end_level = grid.level_of_time(end_time)?;
    averaged_fundsol_stream(coeffs, src, end_level, params, |level, state| {
        acc.feed(grid, level, state);
    })?;
    Ok(acc.table(grid))
}

/// Decay table over an already stored column (used when the field is cheap
/// to keep around).
pub fn decay_table(
    grid: &Grid,
    column: &FundSolColumn,
    rs: &[f64],
) -> Result<Vec<DecayEntry>> {
    let mut acc = DecayAccumulator::new(grid, column.source.y, column.source.eps, rs)?;
    for level in 0..grid.num_levels() {
        acc.feed(grid, level, column.field.level(level));
    }
    Ok(acc.table(grid))
}

/// Compares evolving the stored column state at time tau up to time t
/// against the directly computed column; relative L2 residual at t.
pub fn chapman_kolmogorov_check(
    coeffs: &CoefficientSet,
    src: &SourceSpec,
    tau: f64,
    t: f64,
    params: SolverParams,
) -> Result<f64> {
    let grid = &coeffs.grid;
    let tau_level = grid.level_of_time(tau)?;
    let t_level = grid.level_of_time(t)?;
    if tau < src.y.t - 1e-12 || t_level < tau_level {
        return Err(Error::TimeRangeError(format!(
            "need s <= tau <= t on the grid, got tau = {tau}, t = {t}"
        )));
    }
    let column = averaged_fundsol(coeffs, src, t, params)?;
    let direct = column.field.level(t_level);
    if tau_level == t_level {
        return Ok(0.0);
    }
    let mut mid = SpaceField::zeros(grid);
    mid.data.copy_from_slice(column.field.level(tau_level));
    let (restarted, _) = solve_cauchy(coeffs, &mid, grid.level_time(tau_level), grid.level_time(t_level), params)?;
    let re = restarted.level(t_level);
    let mut diff_sq = 0.0;
    let mut norm_sq = 0.0;
    for i in 0..direct.len() {
        diff_sq += (direct[i] - re[i]).powi(2);
        norm_sq += direct[i].powi(2);
    }
    Ok((diff_sq / norm_sq.max(1e-300)).sqrt())
}

/// Constant-coefficient reference kernels on the torus, evaluated by
/// wrapped-image summation.
#[derive(Debug, Clone, Copy)]
pub enum OracleKernel {
    /// Scalar heat kernel with diffusivity a.
    Heat { a: f64 },
    /// Heat kernel translated by a constant drift velocity.
    DriftedHeat { a: f64, b: [f64; 2] },
    /// Two decoupled scalar heat components with separate diffusivities.
    Decoupled { a: [f64; 2] },
}

impl OracleKernel {
    /// One-dimensional periodic Gaussian: sum over images of
    /// (4 pi a tau)^{-1/2} exp(-(x + k l)^2 / (4 a tau)).
    fn periodic_gaussian(tau: f64, x: f64, a: f64, l: f64) -> f64 {
        let pref = 1.0 / (4.0 * std::f64::consts::PI * a * tau).sqrt();
        let denom = 4.0 * a * tau;
        let mut acc = (-(x * x) / denom).exp();
        for k in 1..10_000 {
            let kl = k as f64 * l;
            let term = (-((x + kl) * (x + kl)) / denom).exp()
                + (-((x - kl) * (x - kl)) / denom).exp();
            acc += term;
            if term < 1e-14 * acc.max(1e-300) {
                break;
            }
        }
        pref * acc
    }

    fn scalar(tau: f64, dx: &[f64; 2], a: f64, n: usize, l: f64) -> f64 {
        let mut v = Self::periodic_gaussian(tau, dx[0], a, l);
        if n == 2 {
            v *= Self::periodic_gaussian(tau, dx[1], a, l);
        }
        v
    }

    /// Kernel entry (i, j) at time separation tau and displacement x - y
    /// (minimum-image reduction is applied internally).
    pub fn eval(&self, grid: &Grid, tau: f64, dx: &[f64; 2], i: usize, j: usize) -> Result<f64> {
        if tau <= 0.0 {
            return Err(Error::NonCausal);
        }
        let dx = [grid.torus_delta(dx[0], 0.0), grid.torus_delta(dx[1], 0.0)];
        let v = match self {
            OracleKernel::Heat { a } => {
                if i == j {
                    Self::scalar(tau, &dx, *a, grid.n, grid.l)
                } else {
                    0.0
                }
            }
            OracleKernel::DriftedHeat { a, b } => {
                if i == j {
                    let shifted = [dx[0] - b[0] * tau, dx[1] - b[1] * tau];
                    Self::scalar(tau, &shifted, *a, grid.n, grid.l)
                } else {
                    0.0
                }
            }
            OracleKernel::Decoupled { a } => {
                if i == j {
                    Self::scalar(tau, &dx, a[i], grid.n, grid.l)
                } else {
                    0.0
                }
            }
        };
        Ok(v)
    }

    /// Kernel column averaged over the discrete source cylinder, the exact
    /// continuum counterpart of a stored column value.
    pub fn averaged_eval(
        &self,
        grid: &Grid,
        src: &SourceSpec,
        t: f64,
        x: &[f64; 2],
        i: usize,
    ) -> Result<f64> {
        let indices = src.source_indices(grid)?;
        let mut acc = 0.0;
        for &(level, node) in &indices {
            let sigma = grid.level_time(level);
            let z = grid.node_coords(node);
            let dx = [x[0] - z[0], x[1] - z[1]];
            acc += self.eval(grid, t - sigma, &dx, i, src.k)?;
        }
        Ok(acc / indices.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{drift_from_stream, presets, DriftProvenance};
    use crate::evolve::component_mean;
    use rand::{Rng, SeedableRng};

    fn heat_1d(nx: usize, l: f64, dt: f64, t0: f64, t1: f64) -> CoefficientSet {
        let g = Grid::new(1, 1, l, nx, dt, t0, t1).unwrap();
        CoefficientSet::build(
            &g,
            presets::identity_a(&g),
            presets::zero_b(&g),
            presets::zero_c(&g),
            DriftProvenance::None,
            None,
            1e-10,
        )
        .unwrap()
    }

    fn cellular_2d(nx: usize, amplitude: f64, dt: f64, t1: f64) -> CoefficientSet {
        let g = Grid::new(2, 1, 1.0, nx, dt, 0.0, t1).unwrap();
        let phi = presets::cellular_stream(&g, amplitude).unwrap();
        let b = drift_from_stream(&phi, &g).unwrap();
        CoefficientSet::build(
            &g,
            presets::identity_a(&g),
            b,
            presets::zero_c(&g),
            DriftProvenance::Stream,
            None,
            1e-10,
        )
        .unwrap()
    }

    #[test]
    fn oracle_kernel_known_values() {
        let g = Grid::new(1, 1, 20.0, 64, 1e-2, 0.0, 1.0).unwrap();
        let k = OracleKernel::Heat { a: 1.0 };
        let v = k.eval(&g, 1.0, &[0.0, 0.0], 0, 0).unwrap();
        assert!((v - 0.28209479).abs() < 1e-7, "1-D on-diagonal value {v}");

        let g2 = Grid::new(2, 1, 20.0, 64, 1e-2, 0.0, 1.0).unwrap();
        let v2 = k.eval(&g2, 1.0, &[0.0, 0.0], 0, 0).unwrap();
        assert!((v2 - 0.07957747).abs() < 1e-7, "2-D on-diagonal value {v2}");

        assert!(matches!(k.eval(&g, 0.0, &[0.1, 0.0], 0, 0), Err(Error::NonCausal)));
        assert!(matches!(k.eval(&g, -0.5, &[0.1, 0.0], 0, 0), Err(Error::NonCausal)));
    }

    #[test]
    fn drifted_oracle_is_exact_translation() {
        let g = Grid::new(1, 1, 8.0, 64, 1e-3, 0.0, 1.0).unwrap();
        let plain = OracleKernel::Heat { a: 1.0 };
        let drifted = OracleKernel::DriftedHeat { a: 1.0, b: [1.0, 0.0] };
        let v = drifted.eval(&g, 0.5, &[0.5, 0.0], 0, 0).unwrap();
        let w = plain.eval(&g, 0.5, &[0.0, 0.0], 0, 0).unwrap();
        assert!((v - w).abs() < 1e-14);
    }

    #[test]
    fn column_mass_and_causality_exact() {
        let coeffs = cellular_2d(16, 2.0, 5e-4, 0.1);
        let g = &coeffs.grid;
        let src = SourceSpec::new(SpaceTimePoint::new(0.02, [0.5, 0.5]), 0, 0.125);
        let column = averaged_fundsol(&coeffs, &src, 0.1, SolverParams::default()).unwrap();
        let window_start = src.y.t - src.eps * src.eps;
        for level in 0..g.num_levels() {
            let t = g.level_time(level);
            if t <= window_start + 1e-12 {
                assert!(column.field.level(level).iter().all(|&v| v == 0.0));
            }
        }
        let s_level = g.level_of_time(src.y.t).unwrap();
        for level in [s_level, g.num_levels() - 1] {
            let mass = component_mean(g, &column.field, level, 0);
            assert!((mass - 1.0).abs() < 1e-10, "mass {mass} at level {level}");
        }
    }

    #[test]
    fn decoupled_system_column_stays_in_its_component() {
        let g = Grid::new(1, 2, 1.0, 64, 1e-4, 0.0, 0.05).unwrap();
        let coeffs = CoefficientSet::build(
            &g,
            presets::decoupled_a(&g, &[1.0, 2.0]),
            presets::zero_b(&g),
            presets::zero_c(&g),
            DriftProvenance::None,
            None,
            1e-10,
        )
        .unwrap();
        let src = SourceSpec::new(SpaceTimePoint::new(0.01, [0.5, 0.0]), 0, 0.07);
        let column = averaged_fundsol(&coeffs, &src, 0.05, SolverParams::default()).unwrap();
        let last = g.num_levels() - 1;
        for node in 0..g.num_nodes() {
            assert!(column.value(last, node, 1).abs() <= 1e-12);
            assert!(column.value(last, node, 0) > -1e-12);
        }
    }

    #[test]
    fn heat_column_matches_averaged_oracle() {
        let nx = 128;
        let l = 1.0;
        let h = l / nx as f64;
        let dt = h * h / 2.0; // 2^-15, so binary-rational times land on levels
        let coeffs = heat_1d(nx, l, dt, -0.015625, 0.125);
        let g = &coeffs.grid;
        let eps = 4.0 * h;
        let src = SourceSpec::new(SpaceTimePoint::new(0.0, [0.5, 0.0]), 0, eps);
        let column = averaged_fundsol(&coeffs, &src, 0.125, SolverParams::default()).unwrap();
        let oracle = OracleKernel::Heat { a: 1.0 };
        for t in [0.0625, 0.125] {
            let level = g.level_of_time(t).unwrap();
            let mut max_err = 0.0f64;
            let mut max_ref = 0.0f64;
            for node in 0..g.num_nodes() {
                let x = g.node_coords(node);
                let want = oracle.averaged_eval(g, &src, t, &x, 0).unwrap();
                max_ref = max_ref.max(want.abs());
                max_err = max_err.max((column.value(level, node, 0) - want).abs());
            }
            assert!(max_err / max_ref < 0.02, "t = {t}: rel Linf {}", max_err / max_ref);
        }
    }

    #[test]
    fn chapman_kolmogorov_exact_and_degenerate() {
        let coeffs = cellular_2d(16, 1.0, 5e-4, 0.08);
        let src = SourceSpec::new(SpaceTimePoint::new(0.02, [0.25, 0.75]), 0, 0.125);
        let res =
            chapman_kolmogorov_check(&coeffs, &src, 0.04, 0.08, SolverParams::default()).unwrap();
        assert!(res <= 1e-10, "composition residual {res}");
        let same =
            chapman_kolmogorov_check(&coeffs, &src, 0.08, 0.08, SolverParams::default()).unwrap();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn duality_residual_small_for_heat_and_cellular() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let heat = heat_1d(64, 1.0, 2e-4, 0.0, 0.05);
        let cell = cellular_2d(16, 2.0, 5e-4, 0.05);
        for coeffs in [&heat, &cell] {
            let g = &coeffs.grid;
            let y_node = rng.gen_range(0..g.num_nodes());
            let src = SourceSpec::new(
                SpaceTimePoint::new(0.02, g.node_coords(y_node)),
                0,
                0.125,
            );
            let mut f = SpaceTimeField::zeros(g);
            for level in 1..g.num_levels() {
                for v in f.level_mut(level) {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
            let res = duality_check(coeffs, &src, &f, SolverParams::default()).unwrap();
            assert!(res <= 1e-10, "duality residual {res}");

            let zero = SpaceTimeField::zeros(g);
            let res0 = duality_check(coeffs, &src, &zero, SolverParams::default()).unwrap();
            assert_eq!(res0, 0.0);
        }
    }

    #[test]
    fn energy_scaling_needs_three_radii() {
        let coeffs = heat_1d(64, 1.0, 2e-4, 0.0, 0.05);
        let err = energy_scaling_probe(
            &coeffs,
            SpaceTimePoint::new(0.02, [0.5, 0.0]),
            0,
            &[0.0625, 0.125],
            0.05,
            SolverParams::default(),
        );
        assert!(matches!(err, Err(Error::RangeError(_))));
    }

    #[test]
    fn energy_scaling_slope_near_minus_half_in_1d() {
        let nx = 128;
        let h = 1.0 / nx as f64;
        let dt = 8.0 * h * h; // (4h)^2 / 2, resolvable for the smallest eps
        let eps_list = [4.0 * h, 8.0 * h, 16.0 * h];
        let e_max = eps_list[2];
        let s = 0.015625;
        let t1 = s + 4.0 * e_max * e_max;
        let coeffs = heat_1d(nx, 1.0, dt, 0.0, t1);
        let (slope, _) = energy_scaling_probe(
            &coeffs,
            SpaceTimePoint::new(s, [0.5, 0.0]),
            0,
            &eps_list,
            t1,
            SolverParams::default(),
        )
        .unwrap();
        assert!((slope + 0.5).abs() < 0.25, "slope {slope}");
    }

    #[test]
    fn decay_table_zero_field_and_range_check() {
        let g = Grid::new(1, 1, 12.8, 128, 2e-3, 0.0, 2.0).unwrap();
        let y = SpaceTimePoint::new(0.5, [6.4, 0.0]);
        let eps = 0.2;
        let mut acc = DecayAccumulator::new(&g, y, eps, &[2.4, 3.2]).unwrap();
        let zero = vec![0.0; g.num_nodes()];
        for level in 0..g.num_levels() {
            acc.feed(&g, level, &zero);
        }
        for entry in acc.table(&g) {
            assert_eq!(entry.weighted_norm, 0.0);
        }
        assert!(matches!(
            DecayAccumulator::new(&g, y, eps, &[1.0]),
            Err(Error::RangeError(_))
        ));
        assert!(matches!(
            DecayAccumulator::new(&g, y, eps, &[6.4]),
            Err(Error::RangeError(_))
        ));
    }

    #[test]
    fn pointwise_probe_finite_and_rejects_empty_set() {
        let nx = 128;
        let h = 1.0 / nx as f64;
        let coeffs = heat_1d(nx, 1.0, 2.0 * h * h, 0.0, 0.0625);
        let src = SourceSpec::new(SpaceTimePoint::new(0.015625, [0.5, 0.0]), 0, 4.0 * h);
        let column = averaged_fundsol(&coeffs, &src, 0.0625, SolverParams::default()).unwrap();
        let sup = pointwise_bound_probe(&coeffs.grid, &column, 3.0 * src.eps).unwrap();
        assert!(sup.is_finite() && sup > 0.0, "sup {sup}");

        assert!(matches!(
            pointwise_bound_probe(&coeffs.grid, &column, src.eps),
            Err(Error::ProbeOutOfRange(_))
        ));
        // a min_dist past the wrap cutoff leaves no admissible probe points
        assert!(matches!(
            pointwise_bound_probe(&coeffs.grid, &column, 0.3),
            Err(Error::ProbeOutOfRange(_))
        ));
    }

    #[test]
    fn constant_drift_column_matches_translated_kernel() {
        let nx = 128;
        let l = 1.0;
        let h = l / nx as f64;
        let dt = h * h / 2.0;
        let b = 0.5;
        let g = Grid::new(1, 1, l, nx, dt, -0.015625, 0.125).unwrap();
        let coeffs = CoefficientSet::build(
            &g,
            presets::identity_a(&g),
            presets::constant_b(&g, &[b, 0.0]),
            presets::zero_c(&g),
            DriftProvenance::Direct,
            None,
            1e-10,
        )
        .unwrap();
        let eps = 4.0 * h;
        let src = SourceSpec::new(SpaceTimePoint::new(0.0, [0.5, 0.0]), 0, eps);
        let column = averaged_fundsol(&coeffs, &src, 0.125, SolverParams::default()).unwrap();
        let oracle = OracleKernel::DriftedHeat { a: 1.0, b: [b, 0.0] };
        let t = 0.125;
        let level = g.level_of_time(t).unwrap();
        let mut max_err = 0.0f64;
        let mut max_ref = 0.0f64;
        for node in 0..g.num_nodes() {
            let x = g.node_coords(node);
            let want = oracle.averaged_eval(&g, &src, t, &x, 0).unwrap();
            max_ref = max_ref.max(want.abs());
            max_err = max_err.max((column.value(level, node, 0) - want).abs());
        }
        assert!(max_err / max_ref < 0.02, "rel Linf {}", max_err / max_ref);
    }
}
