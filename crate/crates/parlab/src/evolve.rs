//! Discrete parabolic operator and implicit time stepping.
//!
//! The operator splits into a flux-form diffusion part (forward differences
//! against the node-sampled form matrix, so the discrete ellipticity bound is
//! exact), a drift part in skew form (exactly antisymmetric for any drift
//! symmetric in (i, j)), and a pointwise zeroth-order part. The adjoint
//! propagator is the literal transpose of the forward step composed in
//! reversed time order, which makes the duality identity hold to solver
//! residual.

use rand::Rng;

use crate::coefficients::{a_index, a_stride, b_index, b_stride, c_stride, CoefficientSet};
use crate::error::{Error, Result};
use crate::lattice::{
    cylinder_indices, field_norms, Grid, ParabolicCylinder, Region, SpaceField, SpaceTimeField,
    SpaceTimePoint,
};
use crate::numerics::{bicgstab, dot, SolveStats};

/// Per-level linear map assembled from validated coefficients.
pub struct DiscreteOperator<'a> {
    grid: &'a Grid,
    a: &'a [f64],
    b: &'a [f64],
    c: &'a [f64],
}

impl<'a> DiscreteOperator<'a> {
    pub fn assemble(coeffs: &'a CoefficientSet, level: usize) -> Self {
        DiscreteOperator {
            grid: &coeffs.grid,
            a: coeffs.a.at_level(level),
            b: coeffs.b.at_level(level),
            c: coeffs.c.at_level(level),
        }
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        self.apply_impl(u, out, false);
    }

    pub fn apply_transpose(&self, u: &[f64], out: &mut [f64]) {
        self.apply_impl(u, out, true);
    }

    /// Drift part alone (skew form): S u = (B^a D_a u + D_a(B^a u)) / 2.
    pub fn apply_drift(&self, u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.add_drift(u, out, false);
    }

    /// Diffusion part alone: -D_a(A^{ab} D_b u) in conservative form.
    pub fn apply_diffusion(&self, u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.add_diffusion(u, out, false);
    }

    /// Zeroth-order part alone: C u.
    pub fn apply_zeroth(&self, u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.add_zeroth(u, out, false);
    }

    fn apply_impl(&self, u: &[f64], out: &mut [f64], transpose: bool) {
        out.fill(0.0);
        self.add_diffusion(u, out, transpose);
        self.add_drift(u, out, transpose);
        self.add_zeroth(u, out, transpose);
    }

    fn add_diffusion(&self, u: &[f64], out: &mut [f64], transpose: bool) {
        let g = self.grid;
        let (n, m, h) = (g.n, g.m, g.h);
        let nodes = g.num_nodes();
        let astride = a_stride(g);
        let mut flux = vec![0.0; nodes * m];
        for alpha in 0..n {
            // F^alpha_i(node) = sum_{beta, j} A D+_beta u^j(node)
            for node in 0..nodes {
                let acoef = &self.a[node * astride..(node + 1) * astride];
                for i in 0..m {
                    let mut f = 0.0;
                    for beta in 0..n {
                        let up = g.shift(node, beta, 1);
                        for j in 0..m {
                            let du = (u[up * m + j] - u[node * m + j]) / h;
                            let idx = if transpose {
                                a_index(g, beta, alpha, j, i)
                            } else {
                                a_index(g, alpha, beta, i, j)
                            };
                            f += acoef[idx] * du;
                        }
                    }
                    flux[node * m + i] = f;
                }
            }
            // out -= D-_alpha F^alpha
            for node in 0..nodes {
                let back = g.shift(node, alpha, -1);
                for i in 0..m {
                    out[node * m + i] -= (flux[node * m + i] - flux[back * m + i]) / h;
                }
            }
        }
    }

    fn add_drift(&self, u: &[f64], out: &mut [f64], transpose: bool) {
        let g = self.grid;
        let (n, m, h) = (g.n, g.m, g.h);
        let nodes = g.num_nodes();
        let bstride = b_stride(g);
        let sign = if transpose { -0.5 } else { 0.5 };
        let mut prod = vec![0.0; nodes * m];
        for alpha in 0..n {
            // prod_i = sum_j B^alpha_ij u^j (B^alpha_ji when transposed)
            for node in 0..nodes {
                let bcoef = &self.b[node * bstride..(node + 1) * bstride];
                for i in 0..m {
                    let mut p = 0.0;
                    for j in 0..m {
                        let idx = if transpose {
                            b_index(g, alpha, j, i)
                        } else {
                            b_index(g, alpha, i, j)
                        };
                        p += bcoef[idx] * u[node * m + j];
                    }
                    prod[node * m + i] = p;
                }
            }
            for node in 0..nodes {
                let up = g.shift(node, alpha, 1);
                let down = g.shift(node, alpha, -1);
                let bcoef = &self.b[node * bstride..(node + 1) * bstride];
                for i in 0..m {
                    // advective half: B^alpha (D_c u)
                    let mut adv = 0.0;
                    for j in 0..m {
                        let idx = if transpose {
                            b_index(g, alpha, j, i)
                        } else {
                            b_index(g, alpha, i, j)
                        };
                        adv += bcoef[idx] * (u[up * m + j] - u[down * m + j]) / (2.0 * h);
                    }
                    // conservative half: D_c (B^alpha u)
                    let cons = (prod[up * m + i] - prod[down * m + i]) / (2.0 * h);
                    out[node * m + i] += sign * (adv + cons);
                }
            }
        }
    }

    fn add_zeroth(&self, u: &[f64], out: &mut [f64], transpose: bool) {
        let g = self.grid;
        let m = g.m;
        let stride = c_stride(g);
        for node in 0..g.num_nodes() {
            let ccoef = &self.c[node * stride..(node + 1) * stride];
            for i in 0..m {
                let mut v = 0.0;
                for j in 0..m {
                    let idx = if transpose { j * m + i } else { i * m + j };
                    v += ccoef[idx] * u[node * m + j];
                }
                out[node * m + i] += v;
            }
        }
    }
}

/// Iterative-solver parameters for the implicit steps.
#[derive(Debug, Clone, Copy)]
pub struct SolverParams {
    /// Target relative residual per step.
    pub rtol: f64,
    /// Largest residual still accepted when the iteration stagnates.
    pub accept_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { rtol: 1e-13, accept_tol: 1e-10, max_iters: 20_000 }
    }
}

/// Aggregated solver diagnostics over a march.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunStats {
    pub max_residual: f64,
    pub total_iters: usize,
    pub steps: usize,
}

impl RunStats {
    fn absorb(&mut self, stats: SolveStats) {
        self.max_residual = self.max_residual.max(stats.residual);
        self.total_iters += stats.iters;
        self.steps += 1;
    }
}

/// One-step solution maps of the implicit scheme; the adjoint step is the
/// exact transpose of the forward step.
pub struct Propagator<'a> {
    pub coeffs: &'a CoefficientSet,
    pub params: SolverParams,
}

impl<'a> Propagator<'a> {
    pub fn new(coeffs: &'a CoefficientSet) -> Self {
        Propagator { coeffs, params: SolverParams::default() }
    }

    pub fn with_params(coeffs: &'a CoefficientSet, params: SolverParams) -> Self {
        Propagator { coeffs, params }
    }

    /// Backward-Euler step onto `level`: solves (I + dt Op_level) x = rhs.
    pub fn step(&self, level: usize, rhs: &[f64], transpose: bool) -> Result<(Vec<f64>, SolveStats)> {
        let op = DiscreteOperator::assemble(self.coeffs, level);
        let dt = self.coeffs.grid.dt;
        let apply = |x: &[f64], out: &mut [f64]| {
            if transpose {
                op.apply_transpose(x, out);
            } else {
                op.apply(x, out);
            }
            for (o, xi) in out.iter_mut().zip(x) {
                *o = xi + dt * *o;
            }
        };
        bicgstab(apply, rhs, self.params.rtol, self.params.accept_tol, self.params.max_iters)
    }

    /// Marches forward from `start_level` (state `init`) to `end_level`,
    /// adding `dt * source(level)` inside each implicit step. The observer
    /// sees every level including the initial one.
    pub fn march_forward(
        &self,
        start_level: usize,
        end_level: usize,
        init: &[f64],
        mut source: impl FnMut(usize, &mut [f64]),
        mut observe: impl FnMut(usize, &[f64]),
    ) -> Result<RunStats> {
        let grid = &self.coeffs.grid;
        if end_level < start_level || end_level >= grid.num_levels() {
            return Err(Error::TimeRangeError(format!(
                "invalid level range {start_level}..{end_level}"
            )));
        }
        let dt = grid.dt;
        let mut stats = RunStats::default();
        let mut state = init.to_vec();
        observe(start_level, &state);
        let mut f = vec![0.0; state.len()];
        for level in (start_level + 1)..=end_level {
            f.fill(0.0);
            source(level, &mut f);
            let rhs: Vec<f64> = state.iter().zip(&f).map(|(s, fi)| s + dt * fi).collect();
            let (next, st) = self.step(level, &rhs, false)?;
            stats.absorb(st);
            state = next;
            observe(level, &state);
        }
        Ok(stats)
    }

    /// Transposed march in reversed time order: w_j = K_j^T^{-1}(w_{j+1} +
    /// dt f_j) for j = end_level .. start_level + 1, with w beyond the end
    /// level zero (plus optional terminal data). The observer sees levels in
    /// decreasing order.
    pub fn march_adjoint(
        &self,
        start_level: usize,
        end_level: usize,
        terminal: Option<&[f64]>,
        mut source: impl FnMut(usize, &mut [f64]),
        mut observe: impl FnMut(usize, &[f64]),
    ) -> Result<RunStats> {
        let grid = &self.coeffs.grid;
        if end_level < start_level || end_level >= grid.num_levels() {
            return Err(Error::TimeRangeError(format!(
                "invalid level range {start_level}..{end_level}"
            )));
        }
        let dt = grid.dt;
        let mut stats = RunStats::default();
        let len = grid.num_nodes() * grid.m;
        let mut state = terminal.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len]);
        let mut f = vec![0.0; len];
        for level in ((start_level + 1)..=end_level).rev() {
            f.fill(0.0);
            source(level, &mut f);
            let rhs: Vec<f64> = state.iter().zip(&f).map(|(s, fi)| s + dt * fi).collect();
            let (next, st) = self.step(level, &rhs, true)?;
            stats.absorb(st);
            state = next;
            observe(level, &state);
        }
        Ok(stats)
    }
}

/// Homogeneous Cauchy problem: evolve `g` from time `s` to `t`; the returned
/// field is zero outside [s, t]. Degenerate `s == t` returns `g` unchanged.
pub fn solve_cauchy(
    coeffs: &CoefficientSet,
    g: &SpaceField,
    s: f64,
    t: f64,
    params: SolverParams,
) -> Result<(SpaceTimeField, RunStats)> {
    let grid = &coeffs.grid;
    if !g.all_finite() {
        return Err(Error::NonFinite("initial data"));
    }
    let s_level = grid.level_of_time(s)?;
    let t_level = grid.level_of_time(t)?;
    if t_level < s_level {
        return Err(Error::TimeRangeError(format!("need s <= t, got s = {s}, t = {t}")));
    }
    let mut field = SpaceTimeField::zeros(grid);
    let prop = Propagator::with_params(coeffs, params);
    let stats = prop.march_forward(
        s_level,
        t_level,
        &g.data,
        |_, _| {},
        |level, state| field.level_mut(level).copy_from_slice(state),
    )?;
    Ok((field, stats))
}

/// Forced problem with zero initial data at `s0`: L u = f up to time `t`.
pub fn solve_forced(
    coeffs: &CoefficientSet,
    f: &SpaceTimeField,
    s0: f64,
    t: f64,
    params: SolverParams,
) -> Result<(SpaceTimeField, RunStats)> {
    let grid = &coeffs.grid;
    let s_level = grid.level_of_time(s0)?;
    let t_level = grid.level_of_time(t)?;
    if t_level < s_level {
        return Err(Error::TimeRangeError(format!("need s0 <= t, got s0 = {s0}, t = {t}")));
    }
    let mut field = SpaceTimeField::zeros(grid);
    let prop = Propagator::with_params(coeffs, params);
    let zero = SpaceField::zeros(grid);
    let stats = prop.march_forward(
        s_level,
        t_level,
        &zero.data,
        |level, out| out.copy_from_slice(f.level(level)),
        |level, state| field.level_mut(level).copy_from_slice(state),
    )?;
    Ok((field, stats))
}

/// Backward adjoint problem L* u = f with u(t0) = 0, f supported in t < t0.
/// Implemented as the exact transpose of the forward propagator.
pub fn solve_adjoint(
    coeffs: &CoefficientSet,
    f: &SpaceTimeField,
    t0: f64,
    params: SolverParams,
) -> Result<(SpaceTimeField, RunStats)> {
    let grid = &coeffs.grid;
    let end_level = grid.level_of_time(t0)?;
    let mut field = SpaceTimeField::zeros(grid);
    let prop = Propagator::with_params(coeffs, params);
    let stats = prop.march_adjoint(
        0,
        end_level,
        None,
        |level, out| out.copy_from_slice(f.level(level)),
        |level, state| field.level_mut(level).copy_from_slice(state),
    )?;
    Ok((field, stats))
}

/// Energy-inequality probe: V2 norm of the run against the right-hand side
/// of the a priori bound.
#[derive(Debug, Clone, Copy)]
pub struct EnergyReport {
    pub v2: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Space-time Lp norm with the grid quadrature weights.
pub fn lp_norm(grid: &Grid, f: &SpaceTimeField, p: f64) -> f64 {
    let hn = grid.h.powi(grid.n as i32);
    let mut acc = 0.0;
    for level in 0..grid.num_levels() {
        for v in f.level(level) {
            acc += v.abs().powf(p) * hn * grid.dt;
        }
    }
    acc.powf(1.0 / p)
}

/// Runs the Cauchy/forced problem over the full grid range and reports the
/// ratio |||u||| / (||g||_{L2} + ||f||_{L^{(2n+4)/(n+4)}}).
pub fn energy_check(
    coeffs: &CoefficientSet,
    g: &SpaceField,
    f: Option<&SpaceTimeField>,
    params: SolverParams,
) -> Result<EnergyReport> {
    let grid = &coeffs.grid;
    let s = grid.t0;
    let t = grid.t1;
    let prop = Propagator::with_params(coeffs, params);
    let s_level = grid.level_of_time(s)?;
    let t_level = grid.level_of_time(t)?;
    let mut field = SpaceTimeField::zeros(grid);
    prop.march_forward(
        s_level,
        t_level,
        &g.data,
        |level, out| {
            if let Some(f) = f {
                out.copy_from_slice(f.level(level));
            }
        },
        |level, state| field.level_mut(level).copy_from_slice(state),
    )?;
    let norms = field_norms(grid, &field, Region::Whole)?;
    let hn = grid.h.powi(grid.n as i32);
    let g_l2 = (g.data.iter().map(|v| v * v).sum::<f64>() * hn).sqrt();
    let p = (2.0 * grid.n as f64 + 4.0) / (grid.n as f64 + 4.0);
    let f_lp = f.map(|f| lp_norm(grid, f, p)).unwrap_or(0.0);
    let rhs = g_l2 + f_lp;
    let ratio = if rhs == 0.0 { 0.0 } else { norms.v2 / rhs };
    Ok(EnergyReport { v2: norms.v2, rhs, ratio })
}

/// Sampled estimate of the local boundedness constant N0: the largest ratio
/// sup_{Q/2} |u| / ((avg_Q |u|^2)^{1/2} + r^2 ||f||_inf) over sampled
/// cylinders and homogeneous solutions.
#[derive(Debug, Clone)]
pub struct LocalBoundEstimate {
    pub n0: f64,
    pub samples: usize,
}

pub fn estimate_local_boundedness(
    coeffs: &CoefficientSet,
    radii: &[f64],
    solutions_per_radius: usize,
    adjoint: bool,
    rng: &mut impl Rng,
    params: SolverParams,
) -> Result<LocalBoundEstimate> {
    let grid = &coeffs.grid;
    let mut n0: f64 = 0.0;
    let mut samples = 0;
    let prop = Propagator::with_params(coeffs, params);
    let len = grid.num_nodes() * grid.m;
    for &r in radii {
        let r2 = r * r;
        // center the cylinder so that both Q and a lead-in window fit
        let (t_center, lead) = if adjoint {
            (grid.t0 + 0.25 * (grid.t1 - grid.t0), grid.t1)
        } else {
            (grid.t1 - 0.25 * (grid.t1 - grid.t0), grid.t0)
        };
        let q_time_ok = if adjoint {
            t_center + r2 <= grid.t1 + 1e-12
        } else {
            t_center - r2 >= grid.t0 - 1e-12
        };
        // the half cylinder must also resolve, hence the doubled thresholds
        if !q_time_ok || r < 4.0 * grid.h || r2 < 8.0 * grid.dt {
            return Err(Error::UnresolvableCylinder { r });
        }
        let _ = lead;
        let t_center_level = ((t_center - grid.t0) / grid.dt).round() as usize;
        let t_center = grid.level_time(t_center_level);
        for _ in 0..solutions_per_radius {
            let node = rng.gen_range(0..grid.num_nodes());
            let x0 = grid.node_coords(node);
            let center = SpaceTimePoint::new(t_center, x0);
            let q = if adjoint {
                ParabolicCylinder::forward(center, r)
            } else {
                ParabolicCylinder::backward(center, r)
            };
            let half = ParabolicCylinder { center, r: r / 2.0, kind: q.kind };
            let q_idx = cylinder_indices(&q, grid)?;
            let half_idx = cylinder_indices(&half, grid)?;
            // random initial data evolved into (or adjointly out of) the cylinder
            let mut init = vec![0.0; len];
            for v in init.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let mut field = SpaceTimeField::zeros(grid);
            if adjoint {
                prop.march_adjoint(
                    0,
                    grid.num_levels() - 1,
                    Some(&init),
                    |_, _| {},
                    |level, state| field.level_mut(level).copy_from_slice(state),
                )?;
            } else {
                prop.march_forward(
                    0,
                    grid.num_levels() - 1,
                    &init,
                    |_, _| {},
                    |level, state| field.level_mut(level).copy_from_slice(state),
                )?;
            }
            let mut mean_sq = 0.0;
            for &(level, node) in &q_idx {
                for comp in 0..grid.m {
                    let v = field.get(level, node, comp);
                    mean_sq += v * v;
                }
            }
            mean_sq /= q_idx.len() as f64;
            let mut sup = 0.0f64;
            for &(level, node) in &half_idx {
                for comp in 0..grid.m {
                    sup = sup.max(field.get(level, node, comp).abs());
                }
            }
            if mean_sq > 0.0 {
                n0 = n0.max(sup / mean_sq.sqrt());
            }
            samples += 1;
        }
    }
    Ok(LocalBoundEstimate { n0, samples })
}

/// Spatial mean of one component at a level (for conservation checks).
pub fn component_mean(grid: &Grid, field: &SpaceTimeField, level: usize, comp: usize) -> f64 {
    let mut acc = 0.0;
    for node in 0..grid.num_nodes() {
        acc += field.get(level, node, comp);
    }
    acc * grid.h.powi(grid.n as i32)
}

/// Exact discrete inner product <u, v> h^n over one level.
pub fn level_inner(grid: &Grid, u: &[f64], v: &[f64]) -> f64 {
    dot(u, v) * grid.h.powi(grid.n as i32)
}
