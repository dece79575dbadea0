//! Coefficient fields A, B, C: construction from presets or stream matrices,
//! validation of parabolicity / drift structure / zeroth-order sign, and the
//! dyadic-cube BMO estimator used to measure Theta.
//!
//! Layouts are node-major flat arrays:
//!   A: [node][alpha][beta][i][j], B: [node][alpha][i][j], C: [node][i][j].
//! Coefficients are piecewise constant in time, tabulated either once
//! (static) or per time level.

use crate::error::{Error, Result};
use crate::lattice::Grid;
use crate::numerics::sym_min_eigenvalue;

/// A coefficient table that is either static in time or tabulated per level.
#[derive(Debug, Clone)]
pub struct TimeTable {
    tables: Vec<Vec<f64>>,
}

impl TimeTable {
    pub fn constant(table: Vec<f64>) -> Self {
        TimeTable { tables: vec![table] }
    }

    pub fn per_level(tables: Vec<Vec<f64>>) -> Self {
        TimeTable { tables }
    }

    /// Table sampled at a time level (clamped; backward Euler samples the
    /// implicit level).
    pub fn at_level(&self, level: usize) -> &[f64] {
        &self.tables[level.min(self.tables.len() - 1)]
    }

    pub fn num_tables(&self) -> usize {
        self.tables.len()
    }

    pub fn all_finite(&self) -> bool {
        self.tables.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

pub fn a_index(grid: &Grid, alpha: usize, beta: usize, i: usize, j: usize) -> usize {
    ((alpha * grid.n + beta) * grid.m + i) * grid.m + j
}

pub fn b_index(grid: &Grid, alpha: usize, i: usize, j: usize) -> usize {
    (alpha * grid.m + i) * grid.m + j
}

pub fn a_stride(grid: &Grid) -> usize {
    grid.n * grid.n * grid.m * grid.m
}

pub fn b_stride(grid: &Grid) -> usize {
    grid.n * grid.m * grid.m
}

pub fn c_stride(grid: &Grid) -> usize {
    grid.m * grid.m
}

/// Stream matrix Phi: antisymmetric in (alpha, beta), symmetric in (i, j).
/// Same node-major layout as A.
#[derive(Debug, Clone)]
pub struct StreamMatrix {
    pub table: TimeTable,
}

impl StreamMatrix {
    pub fn new(grid: &Grid, table: TimeTable) -> Result<Self> {
        if !table.all_finite() {
            return Err(Error::NonFinite("stream matrix"));
        }
        let stride = a_stride(grid);
        for k in 0..table.num_tables() {
            let tab = &table.tables[k];
            if tab.len() != grid.num_nodes() * stride {
                return Err(Error::ShapeMismatch(format!(
                    "stream table {k}: expected {} entries, got {}",
                    grid.num_nodes() * stride,
                    tab.len()
                )));
            }
            for node in 0..grid.num_nodes() {
                let base = node * stride;
                for alpha in 0..grid.n {
                    for beta in 0..grid.n {
                        for i in 0..grid.m {
                            for j in 0..grid.m {
                                let v = tab[base + a_index(grid, alpha, beta, i, j)];
                                let anti = tab[base + a_index(grid, beta, alpha, i, j)];
                                let sym = tab[base + a_index(grid, alpha, beta, j, i)];
                                if (v + anti).abs() > 1e-12 * (1.0 + v.abs()) {
                                    return Err(Error::ShapeMismatch(
                                        "stream matrix not antisymmetric in (alpha, beta)".into(),
                                    ));
                                }
                                if (v - sym).abs() > 1e-12 * (1.0 + v.abs()) {
                                    return Err(Error::ShapeMismatch(
                                        "stream matrix not symmetric in (i, j)".into(),
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(StreamMatrix { table })
    }
}

/// Centered difference of a node-major scalar lane along `axis`.
fn centered_diff(grid: &Grid, get: impl Fn(usize) -> f64, node: usize, axis: usize) -> f64 {
    let fp = get(grid.shift(node, axis, 1));
    let fm = get(grid.shift(node, axis, -1));
    (fp - fm) / (2.0 * grid.h)
}

/// B^alpha_ij = D_beta Phi^{alpha beta}_ij with centered differences.
///
/// Periodic centered differences commute, so antisymmetry of Phi makes the
/// discrete divergence of B vanish identically.
pub fn drift_from_stream(phi: &StreamMatrix, grid: &Grid) -> Result<TimeTable> {
    let astride = a_stride(grid);
    let bstride = b_stride(grid);
    let mut out = Vec::with_capacity(phi.table.num_tables());
    for k in 0..phi.table.num_tables() {
        let tab = phi.table.at_level(k);
        let mut b = vec![0.0; grid.num_nodes() * bstride];
        for node in 0..grid.num_nodes() {
            for alpha in 0..grid.n {
                for i in 0..grid.m {
                    for j in 0..grid.m {
                        let mut v = 0.0;
                        for beta in 0..grid.n {
                            let idx = a_index(grid, alpha, beta, i, j);
                            v += centered_diff(grid, |nd| tab[nd * astride + idx], node, beta);
                        }
                        b[node * bstride + b_index(grid, alpha, i, j)] = v;
                    }
                }
            }
        }
        out.push(b);
    }
    Ok(TimeTable::per_level(out))
}

/// Sharp ellipticity constants of the form matrix M_{(alpha,i),(beta,j)} =
/// A^{alpha beta}_{ij}: lambda is the smallest eigenvalue of the symmetric
/// part over all nodes and levels, Lambda the largest Frobenius norm.
pub fn validate_parabolicity(grid: &Grid, a: &TimeTable) -> Result<(f64, f64)> {
    if !a.all_finite() {
        return Err(Error::NonFinite("principal coefficients"));
    }
    let stride = a_stride(grid);
    let dim = grid.n * grid.m;
    let mut lambda = f64::INFINITY;
    let mut big_lambda = 0.0f64;
    let mut form = vec![0.0; dim * dim];
    for k in 0..a.num_tables() {
        let tab = a.at_level(k);
        for node in 0..grid.num_nodes() {
            let base = node * stride;
            let mut frob_sq = 0.0;
            for alpha in 0..grid.n {
                for i in 0..grid.m {
                    for beta in 0..grid.n {
                        for j in 0..grid.m {
                            let v = tab[base + a_index(grid, alpha, beta, i, j)];
                            let w = tab[base + a_index(grid, beta, alpha, j, i)];
                            let row = alpha * grid.m + i;
                            let col = beta * grid.m + j;
                            form[row * dim + col] = 0.5 * (v + w);
                            frob_sq += v * v;
                        }
                    }
                }
            }
            lambda = lambda.min(sym_min_eigenvalue(&form, dim));
            big_lambda = big_lambda.max(frob_sq.sqrt());
        }
    }
    if lambda <= 0.0 {
        return Err(Error::NotParabolic { lambda });
    }
    Ok((lambda, big_lambda))
}

/// Symmetry and discrete-divergence residuals of a drift table.
pub fn validate_drift(grid: &Grid, b: &TimeTable) -> (f64, f64) {
    let stride = b_stride(grid);
    let mut sym = 0.0f64;
    let mut div = 0.0f64;
    for k in 0..b.num_tables() {
        let tab = b.at_level(k);
        for node in 0..grid.num_nodes() {
            let base = node * stride;
            for alpha in 0..grid.n {
                for i in 0..grid.m {
                    for j in 0..grid.m {
                        let v = tab[base + b_index(grid, alpha, i, j)];
                        let w = tab[base + b_index(grid, alpha, j, i)];
                        sym = sym.max((v - w).abs());
                    }
                }
            }
            for i in 0..grid.m {
                for j in 0..grid.m {
                    let mut d = 0.0;
                    for alpha in 0..grid.n {
                        let idx = b_index(grid, alpha, i, j);
                        d += centered_diff(grid, |nd| tab[nd * stride + idx], node, alpha);
                    }
                    div = div.max(d.abs());
                }
            }
        }
    }
    (sym, div)
}

/// Minimum eigenvalue of the symmetric part of C over all nodes and levels.
pub fn validate_zeroth(grid: &Grid, c: &TimeTable) -> f64 {
    let stride = c_stride(grid);
    let mut min_eig = f64::INFINITY;
    let mut sym = vec![0.0; grid.m * grid.m];
    for k in 0..c.num_tables() {
        let tab = c.at_level(k);
        for node in 0..grid.num_nodes() {
            let base = node * stride;
            for i in 0..grid.m {
                for j in 0..grid.m {
                    sym[i * grid.m + j] = 0.5 * (tab[base + i * grid.m + j] + tab[base + j * grid.m + i]);
                }
            }
            min_eig = min_eig.min(sym_min_eigenvalue(&sym, grid.m));
        }
    }
    min_eig
}

/// Dyadic mean-oscillation estimator on the spatial torus.
///
/// Scans aligned dyadic cubes of side L, L/2, ..., 4h and returns the largest
/// mean of |phi - mean_Q phi| over a cube.
pub fn bmo_norm(grid: &Grid, phi: &[f64]) -> Result<f64> {
    if grid.nx < 8 {
        return Err(Error::UnresolvableCube { nx: grid.nx });
    }
    debug_assert_eq!(phi.len(), grid.num_nodes());
    let mut best = 0.0f64;
    let mut size = grid.nx;
    while size >= 4 {
        let per_axis = grid.nx / size;
        match grid.n {
            1 => {
                for block in 0..per_axis {
                    let start = block * size;
                    let mean: f64 =
                        (0..size).map(|k| phi[start + k]).sum::<f64>() / size as f64;
                    let osc: f64 = (0..size).map(|k| (phi[start + k] - mean).abs()).sum::<f64>()
                        / size as f64;
                    best = best.max(osc);
                }
            }
            _ => {
                let count = (size * size) as f64;
                for bx in 0..per_axis {
                    for by in 0..per_axis {
                        let mut sum = 0.0;
                        for kx in 0..size {
                            for ky in 0..size {
                                sum += phi[(bx * size + kx) + grid.nx * (by * size + ky)];
                            }
                        }
                        let mean = sum / count;
                        let mut osc = 0.0;
                        for kx in 0..size {
                            for ky in 0..size {
                                osc += (phi[(bx * size + kx) + grid.nx * (by * size + ky)] - mean)
                                    .abs();
                            }
                        }
                        best = best.max(osc / count);
                    }
                }
            }
        }
        size /= 2;
    }
    Ok(best)
}

/// Theta^2 = sum over components of sup_t BMO(Phi component at t)^2.
pub fn theta_of(grid: &Grid, phi: &StreamMatrix) -> Result<f64> {
    let stride = a_stride(grid);
    let mut theta_sq = 0.0;
    let mut lane = vec![0.0; grid.num_nodes()];
    for alpha in 0..grid.n {
        for beta in 0..grid.n {
            for i in 0..grid.m {
                for j in 0..grid.m {
                    let idx = a_index(grid, alpha, beta, i, j);
                    let mut sup = 0.0f64;
                    for k in 0..phi.table.num_tables() {
                        let tab = phi.table.at_level(k);
                        for node in 0..grid.num_nodes() {
                            lane[node] = tab[node * stride + idx];
                        }
                        sup = sup.max(bmo_norm(grid, &lane)?);
                    }
                    theta_sq += sup * sup;
                }
            }
        }
    }
    Ok(theta_sq.sqrt())
}

/// How the drift entered the coefficient set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftProvenance {
    None,
    Direct,
    Stream,
}

/// Validation summary produced while building a CoefficientSet.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub lambda: f64,
    pub big_lambda: f64,
    pub theta: Option<f64>,
    pub drift_sym_residual: f64,
    pub drift_div_residual: f64,
    pub zeroth_min_eig: f64,
}

/// Validated coefficient tables with their measured constants.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub grid: Grid,
    pub a: TimeTable,
    pub b: TimeTable,
    pub c: TimeTable,
    pub provenance: DriftProvenance,
    pub report: ValidationReport,
}

impl CoefficientSet {
    /// Validates the tables and freezes them. `drift_tol` gates the drift
    /// residuals (default 1e-10 for stream-derived drifts).
    pub fn build(
        grid: &Grid,
        a: TimeTable,
        b: TimeTable,
        c: TimeTable,
        provenance: DriftProvenance,
        theta: Option<f64>,
        drift_tol: f64,
    ) -> Result<Self> {
        let (lambda, big_lambda) = validate_parabolicity(grid, &a)?;
        if !b.all_finite() {
            return Err(Error::NonFinite("drift"));
        }
        if !c.all_finite() {
            return Err(Error::NonFinite("zeroth-order coefficients"));
        }
        let (sym, div) = validate_drift(grid, &b);
        if sym > drift_tol || div > drift_tol {
            return Err(Error::ConfigError(format!(
                "drift rejected: symmetry residual {sym:.3e}, divergence residual {div:.3e}, tolerance {drift_tol:.1e}"
            )));
        }
        let zeroth_min_eig = validate_zeroth(grid, &c);
        if zeroth_min_eig < -1e-12 {
            return Err(Error::ConfigError(format!(
                "zeroth-order coefficient not nonnegative definite: min eigenvalue {zeroth_min_eig:.3e}"
            )));
        }
        Ok(CoefficientSet {
            grid: grid.clone(),
            a,
            b,
            c,
            provenance,
            report: ValidationReport {
                lambda,
                big_lambda,
                theta,
                drift_sym_residual: sym,
                drift_div_residual: div,
                zeroth_min_eig,
            },
        })
    }
}

/// Ready-made coefficient builders for the shipped presets.
pub mod presets {
    use super::*;

    pub fn identity_a(grid: &Grid) -> TimeTable {
        diagonal_a(grid, &[1.0, 1.0])
    }

    /// A^{alpha alpha}_{ii} = diag[alpha], all other entries zero.
    pub fn diagonal_a(grid: &Grid, diag: &[f64]) -> TimeTable {
        let stride = a_stride(grid);
        let mut tab = vec![0.0; grid.num_nodes() * stride];
        for node in 0..grid.num_nodes() {
            for alpha in 0..grid.n {
                for i in 0..grid.m {
                    tab[node * stride + a_index(grid, alpha, alpha, i, i)] = diag[alpha];
                }
            }
        }
        TimeTable::constant(tab)
    }

    /// Per-component diffusivities: A^{alpha alpha}_{ii} = comps[i].
    pub fn decoupled_a(grid: &Grid, comps: &[f64]) -> TimeTable {
        let stride = a_stride(grid);
        let mut tab = vec![0.0; grid.num_nodes() * stride];
        for node in 0..grid.num_nodes() {
            for alpha in 0..grid.n {
                for i in 0..grid.m {
                    tab[node * stride + a_index(grid, alpha, alpha, i, i)] = comps[i];
                }
            }
        }
        TimeTable::constant(tab)
    }

    /// n = 2 scalar principal part [[1, s], [-s, 1]].
    pub fn skew_a(grid: &Grid, s: f64) -> TimeTable {
        let stride = a_stride(grid);
        let mut tab = vec![0.0; grid.num_nodes() * stride];
        for node in 0..grid.num_nodes() {
            for i in 0..grid.m {
                tab[node * stride + a_index(grid, 0, 0, i, i)] = 1.0;
                tab[node * stride + a_index(grid, 1, 1, i, i)] = 1.0;
                tab[node * stride + a_index(grid, 0, 1, i, i)] = s;
                tab[node * stride + a_index(grid, 1, 0, i, i)] = -s;
            }
        }
        TimeTable::constant(tab)
    }

    /// m = 2 coupled diffusion: A^{alpha alpha} = [[1, c], [c, 1]].
    pub fn coupled_system_a(grid: &Grid, couple: f64) -> TimeTable {
        let stride = a_stride(grid);
        let mut tab = vec![0.0; grid.num_nodes() * stride];
        for node in 0..grid.num_nodes() {
            for alpha in 0..grid.n {
                for i in 0..grid.m {
                    for j in 0..grid.m {
                        let v = if i == j { 1.0 } else { couple };
                        tab[node * stride + a_index(grid, alpha, alpha, i, j)] = v;
                    }
                }
            }
        }
        TimeTable::constant(tab)
    }

    pub fn zero_b(grid: &Grid) -> TimeTable {
        TimeTable::constant(vec![0.0; grid.num_nodes() * b_stride(grid)])
    }

    pub fn zero_c(grid: &Grid) -> TimeTable {
        TimeTable::constant(vec![0.0; grid.num_nodes() * c_stride(grid)])
    }

    pub fn scaled_identity_c(grid: &Grid, scale: f64) -> TimeTable {
        let stride = c_stride(grid);
        let mut tab = vec![0.0; grid.num_nodes() * stride];
        for node in 0..grid.num_nodes() {
            for i in 0..grid.m {
                tab[node * stride + i * grid.m + i] = scale;
            }
        }
        TimeTable::constant(tab)
    }

    /// Constant drift b_alpha * delta_ij: symmetric and divergence free.
    pub fn constant_b(grid: &Grid, b: &[f64]) -> TimeTable {
        let stride = b_stride(grid);
        let mut tab = vec![0.0; grid.num_nodes() * stride];
        for node in 0..grid.num_nodes() {
            for alpha in 0..grid.n {
                for i in 0..grid.m {
                    tab[node * stride + b_index(grid, alpha, i, i)] = b[alpha];
                }
            }
        }
        TimeTable::constant(tab)
    }

    /// Scalar stream function H tabulated into Phi^{12} = H = -Phi^{21}.
    pub fn scalar_stream(grid: &Grid, h_of_x: impl Fn(&[f64; 2]) -> f64) -> Result<StreamMatrix> {
        assert_eq!(grid.n, 2, "stream presets need n = 2");
        let stride = a_stride(grid);
        let mut tab = vec![0.0; grid.num_nodes() * stride];
        for node in 0..grid.num_nodes() {
            let x = grid.node_coords(node);
            let h = h_of_x(&x);
            for i in 0..grid.m {
                tab[node * stride + a_index(grid, 0, 1, i, i)] = h;
                tab[node * stride + a_index(grid, 1, 0, i, i)] = -h;
            }
        }
        StreamMatrix::new(grid, TimeTable::constant(tab))
    }

    /// Cellular flow: H = amplitude * sin(2 pi x / L) sin(2 pi y / L).
    pub fn cellular_stream(grid: &Grid, amplitude: f64) -> Result<StreamMatrix> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let l = grid.l;
        scalar_stream(grid, move |x| {
            amplitude * (two_pi * x[0] / l).sin() * (two_pi * x[1] / l).sin()
        })
    }

    /// Shear flow: H = amplitude * sin(2 pi y / L), independent of x.
    pub fn shear_stream(grid: &Grid, amplitude: f64) -> Result<StreamMatrix> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let l = grid.l;
        scalar_stream(grid, move |x| amplitude * (two_pi * x[1] / l).sin())
    }
}
