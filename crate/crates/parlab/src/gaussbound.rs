//! Exponential-twist machinery for Gaussian upper bounds: construction of
//! bounded Lipschitz twists with certified gradient and curvature bounds,
//! twisted evolution with its L2 growth series, the growth-budget constants
//! (nu, mu, kappa), and the Gaussian least-squares fit with its verdict.

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::evolve::{solve_cauchy, SolverParams};
use crate::lattice::{Grid, SpaceField};
use crate::numerics::linear_fit;

/// Bounded spatial twist with certified node-wise difference bounds.
#[derive(Debug, Clone)]
pub struct TwistFunction {
    /// One value per spatial node.
    pub psi: Vec<f64>,
    /// Ramp slope requested at construction.
    pub gamma_target: f64,
    /// Certified node-wise bound on first differences (measured by scan).
    pub gamma: f64,
    /// Certified node-wise bound on second differences (measured by scan).
    pub delta: f64,
    /// Anchor points (x, y) when built by the ramp recipe.
    pub anchors: Option<([f64; 2], [f64; 2])>,
}

/// Piecewise-quadratic ramp: 0 at 0, d at d, slope at most 2, curvature
/// 4/d in magnitude.
fn ramp(r: f64, d: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else if r >= d {
        d
    } else if r <= d / 2.0 {
        2.0 / d * r * r
    } else {
        d - 2.0 / d * (d - r) * (d - r)
    }
}

/// Builds the twist psi(z) = (gamma/2) * ramp(d - dist(z, x)) with
/// d = |x - y|: zero at y (and beyond), gamma d / 2 at x, constant away
/// from the anchor segment so it is periodic. The returned gamma and delta
/// are measured by an exhaustive node scan.
pub fn build_twist(grid: &Grid, x: [f64; 2], y: [f64; 2], gamma: f64) -> Result<TwistFunction> {
    let nodes = grid.num_nodes();
    if gamma == 0.0 {
        return Ok(TwistFunction {
            psi: vec![0.0; nodes],
            gamma_target: 0.0,
            gamma: 0.0,
            delta: 0.0,
            anchors: Some((x, y)),
        });
    }
    let d = grid.torus_dist(&x, &y);
    if d < 4.0 * grid.h {
        return Err(Error::AnchorsTooClose { d });
    }
    if d > grid.l / 4.0 * (1.0 + 1e-12) {
        return Err(Error::WrapViolation { d });
    }
    let psi: Vec<f64> = (0..nodes)
        .map(|node| {
            let rho = grid.torus_dist(&grid.node_coords(node), &x);
            gamma / 2.0 * ramp(d - rho, d)
        })
        .collect();
    let (g_meas, d_meas) = certify_differences(grid, &psi);
    Ok(TwistFunction { psi, gamma_target: gamma, gamma: g_meas, delta: d_meas, anchors: Some((x, y)) })
}

/// Exhaustive scan of forward first differences and pure second differences
/// along each axis.
pub fn certify_differences(grid: &Grid, psi: &[f64]) -> (f64, f64) {
    let mut g: f64 = 0.0;
    let mut d: f64 = 0.0;
    for node in 0..grid.num_nodes() {
        for alpha in 0..grid.n {
            let up = grid.shift(node, alpha, 1);
            let down = grid.shift(node, alpha, -1);
            g = g.max((psi[up] - psi[node]).abs() / grid.h);
            d = d.max((psi[up] - 2.0 * psi[node] + psi[down]).abs() / (grid.h * grid.h));
        }
    }
    (g, d)
}

/// Growth-budget constants of the twisted evolution.
#[derive(Debug, Clone, Copy)]
pub struct PaperConstants {
    pub lambda: f64,
    pub big_lambda: f64,
    pub theta: f64,
    pub c0: f64,
    pub nu: f64,
    pub mu: f64,
    /// Guaranteed Gaussian decay rate 1 / (32 nu).
    pub kappa: f64,
}

pub fn paper_constants(lambda: f64, big_lambda: f64, theta: f64, c0: f64) -> Result<PaperConstants> {
    if !(lambda > 0.0) || big_lambda < lambda || theta < 0.0 || !(c0 > 0.0) {
        return Err(Error::InvalidConstants(format!(
            "need 0 < lambda <= Lambda, theta >= 0, c0 > 0; got lambda = {lambda}, \
             Lambda = {big_lambda}, theta = {theta}, c0 = {c0}"
        )));
    }
    let nu = (4.0 * big_lambda * big_lambda / lambda + c0 * c0 * theta * theta / lambda
        + 2.0 * c0 * theta)
        / 2.0;
    let mu = c0 * theta / 2.0;
    Ok(PaperConstants { lambda, big_lambda, theta, c0, nu, mu, kappa: 1.0 / (32.0 * nu) })
}

/// One twisted run: the weighted L2 series I(t) = sum e^{2 psi} |u|^2 h^n.
#[derive(Debug, Clone)]
pub struct DaviesRun {
    pub times: Vec<f64>,
    pub i_series: Vec<f64>,
    pub gamma: f64,
    pub delta: f64,
}

/// Twisted evolution e^psi P (e^{-psi} f) from s to t; I(s) equals
/// ||f||^2_{L2} up to roundoff by construction.
pub fn davies_evolve(
    coeffs: &CoefficientSet,
    twist: &TwistFunction,
    f: &SpaceField,
    s: f64,
    t: f64,
    params: SolverParams,
) -> Result<(SpaceField, DaviesRun)> {
    let grid = &coeffs.grid;
    let m = grid.m;
    let hn = grid.h.powi(grid.n as i32);
    let mut init = SpaceField::zeros(grid);
    for node in 0..grid.num_nodes() {
        let w = (-twist.psi[node]).exp();
        for comp in 0..m {
            init.set(node, comp, w * f.get(node, comp));
        }
    }
    let (u, _) = solve_cauchy(coeffs, &init, s, t, params)?;
    let s_level = grid.level_of_time(s)?;
    let t_level = grid.level_of_time(t)?;
    let mut times = Vec::with_capacity(t_level - s_level + 1);
    let mut i_series = Vec::with_capacity(t_level - s_level + 1);
    for level in s_level..=t_level {
        let state = u.level(level);
        let mut acc = 0.0;
        for node in 0..grid.num_nodes() {
            let w = (2.0 * twist.psi[node]).exp();
            for comp in 0..m {
                let v = state[node * m + comp];
                acc += w * v * v;
            }
        }
        times.push(grid.level_time(level));
        i_series.push(acc * hn);
    }
    let mut out = SpaceField::zeros(grid);
    let last = u.level(t_level);
    for node in 0..grid.num_nodes() {
        let w = twist.psi[node].exp();
        for comp in 0..m {
            out.set(node, comp, w * last[node * m + comp]);
        }
    }
    Ok((out, DaviesRun { times, i_series, gamma: twist.gamma, delta: twist.delta, }))
}

/// Verdict of one twisted run against the growth budget nu gamma^2 + mu delta.
#[derive(Debug, Clone, Copy)]
pub struct GrowthReport {
    /// Largest one-step exponential rate of I(t), as a rate for sqrt(I).
    pub measured_rate: f64,
    pub budget: f64,
    pub pass: bool,
    /// budget - measured_rate (nonnegative when passing).
    pub margin: f64,
}

pub fn twist_growth_report(run: &DaviesRun, consts: &PaperConstants, tol: f64) -> GrowthReport {
    let mut rate = f64::NEG_INFINITY;
    for k in 1..run.times.len() {
        let (i0, i1) = (run.i_series[k - 1], run.i_series[k]);
        if i0 <= 0.0 || i1 <= 0.0 {
            continue;
        }
        let dt = run.times[k] - run.times[k - 1];
        rate = rate.max((i1 / i0).ln() / (2.0 * dt));
    }
    if rate == f64::NEG_INFINITY {
        rate = 0.0;
    }
    let budget = consts.nu * run.gamma * run.gamma + consts.mu * run.delta;
    GrowthReport { measured_rate: rate, budget, pass: rate <= budget + tol, margin: budget - rate }
}

/// One sample for the Gaussian fit: time separation, spatial separation,
/// and the sampled |Gamma| value.
#[derive(Debug, Clone, Copy)]
pub struct FitPoint {
    pub tau: f64,
    pub dist: f64,
    pub value: f64,
}

/// Least-squares Gaussian profile over a window of fit points.
#[derive(Debug, Clone, Copy)]
pub struct GaussianFit {
    pub c_fit: f64,
    pub kappa_fit: f64,
    /// Certified sup-form constant over the window at the fitted kappa.
    pub c_sup: f64,
    pub rms_residual: f64,
    pub num_points: usize,
}

/// Fits log(value) + (n/2) log(tau) against -kappa * dist^2 / tau + log C.
/// Points with value at or below `floor` are dropped.
pub fn gaussian_fit(n: usize, points: &[FitPoint], floor: f64) -> Result<GaussianFit> {
    let half_n = n as f64 / 2.0;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for p in points {
        if p.value <= floor || p.tau <= 0.0 {
            continue;
        }
        xs.push(p.dist * p.dist / p.tau);
        ys.push(p.value.ln() + half_n * p.tau.ln());
    }
    if xs.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let (intercept, slope, rms) = linear_fit(&xs, &ys)?;
    let kappa_fit = -slope;
    let c_fit = intercept.exp();
    let mut c_sup: f64 = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        c_sup = c_sup.max((y + kappa_fit * x).exp());
    }
    Ok(GaussianFit { c_fit, kappa_fit, c_sup, rms_residual: rms, num_points: xs.len() })
}

/// Collects fit points from a stored column: tau in
/// [max(4 eps^2, tau_min), tau_max], minimum-image separation at most L/4.
pub fn fit_points_from_column(
    grid: &Grid,
    column: &crate::fundsol::FundSolColumn,
    tau_min: f64,
    tau_max: f64,
) -> Vec<FitPoint> {
    let src = &column.source;
    let eps2 = src.eps * src.eps;
    let lo = tau_min.max(4.0 * eps2);
    let mut points = Vec::new();
    for level in 0..grid.num_levels() {
        let tau = grid.level_time(level) - src.y.t;
        if tau < lo - 1e-12 || tau > tau_max + 1e-12 {
            continue;
        }
        for node in 0..grid.num_nodes() {
            let dist = grid.torus_dist(&grid.node_coords(node), &src.y.x);
            if dist > grid.l / 4.0 {
                continue;
            }
            for comp in 0..grid.m {
                points.push(FitPoint { tau, dist, value: column.value(level, node, comp).abs() });
            }
        }
    }
    points
}

/// Comparison of the fitted decay against the guaranteed decay.
#[derive(Debug, Clone, Copy)]
pub struct BoundVerdict {
    pub pass: bool,
    /// kappa_fit / kappa_paper; at least 1 when passing.
    pub kappa_margin: f64,
    pub kappa_fit: f64,
    pub kappa_paper: f64,
    pub c_sup: f64,
}

pub fn bound_verdict(fit: &GaussianFit, consts: &PaperConstants) -> BoundVerdict {
    let pass = fit.kappa_fit >= consts.kappa && fit.c_sup.is_finite();
    BoundVerdict {
        pass,
        kappa_margin: fit.kappa_fit / consts.kappa,
        kappa_fit: fit.kappa_fit,
        kappa_paper: consts.kappa,
        c_sup: fit.c_sup,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{presets, DriftProvenance};
    use crate::evolve::level_inner;

    fn heat_1d(nx: usize, l: f64, dt: f64, t1: f64) -> CoefficientSet {
        let g = Grid::new(1, 1, l, nx, dt, 0.0, t1).unwrap();
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

    #[test]
    fn paper_constants_known_values() {
        let c = paper_constants(1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(c.nu, 2.0);
        assert_eq!(c.mu, 0.0);
        assert_eq!(c.kappa, 0.015625); // 1/64

        let c = paper_constants(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((c.nu - 3.5).abs() < 1e-15);
        assert!((c.mu - 0.5).abs() < 1e-15);
        assert!((c.kappa - 1.0 / 112.0).abs() < 1e-15);

        for c0 in [0.5, 1.0, 7.0] {
            assert_eq!(paper_constants(1.0, 2.0, 0.0, c0).unwrap().mu, 0.0);
        }

        assert!(matches!(paper_constants(0.0, 1.0, 0.0, 1.0), Err(Error::InvalidConstants(_))));
        assert!(matches!(paper_constants(1.0, 0.5, 0.0, 1.0), Err(Error::InvalidConstants(_))));
    }

    #[test]
    fn twist_anchor_values_and_certification() {
        let g = Grid::new(1, 1, 8.0, 256, 1e-3, 0.0, 0.1).unwrap();
        let x = [2.0, 0.0];
        let y = [1.0, 0.0];
        let gamma = 1.5;
        let tw = build_twist(&g, x, y, gamma).unwrap();
        let d = g.torus_dist(&x, &y);
        let node_x = (x[0] / g.h).round() as usize;
        let node_y = (y[0] / g.h).round() as usize;
        assert_eq!(tw.psi[node_y], 0.0);
        assert!((tw.psi[node_x] - gamma * d / 2.0).abs() < 1e-14);
        // ramp slope never exceeds the target; curvature finite and measured
        assert!(tw.gamma <= gamma + 1e-12, "measured gamma {}", tw.gamma);
        assert!(tw.gamma > 0.5 * gamma, "ramp should come close to its slope");
        assert!(tw.delta > 0.0 && tw.delta.is_finite());

        assert!(matches!(
            build_twist(&g, x, [2.0 + 2.0 * g.h, 0.0], 1.0),
            Err(Error::AnchorsTooClose { .. })
        ));
        assert!(matches!(
            build_twist(&g, x, [5.0, 0.0], 1.0),
            Err(Error::WrapViolation { .. })
        ));

        let zero = build_twist(&g, x, y, 0.0).unwrap();
        assert!(zero.psi.iter().all(|&v| v == 0.0));
        assert_eq!((zero.gamma, zero.delta), (0.0, 0.0));
    }

    #[test]
    fn davies_initial_value_and_untwisted_monotonicity() {
        let coeffs = heat_1d(64, 1.0, 1e-4, 0.01);
        let g = &coeffs.grid;
        let f = SpaceField::from_fn(g, |x, _| 1.0 + (7.0 * x[0]).sin());
        let zero_twist = TwistFunction {
            psi: vec![0.0; g.num_nodes()],
            gamma_target: 0.0,
            gamma: 0.0,
            delta: 0.0,
            anchors: None,
        };
        let (_, run) =
            davies_evolve(&coeffs, &zero_twist, &f, 0.0, 0.01, SolverParams::default()).unwrap();
        let f_sq = level_inner(g, &f.data, &f.data);
        assert!((run.i_series[0] - f_sq).abs() <= 1e-14 * f_sq);
        for k in 1..run.i_series.len() {
            assert!(run.i_series[k] <= run.i_series[k - 1] * (1.0 + 1e-13));
        }
    }

    #[test]
    fn heat_twisted_growth_within_budget_and_monotone_in_gamma() {
        let coeffs = heat_1d(128, 4.0, 5e-4, 0.05);
        let g = &coeffs.grid;
        let consts = paper_constants(1.0, 1.0, 0.0, 1.0).unwrap();
        let f = SpaceField::from_fn(g, |x, _| (-(x[0] - 2.0) * (x[0] - 2.0) / 0.02).exp());
        let mut rates = Vec::new();
        for gamma in [0.5, 1.0, 2.0] {
            let tw = build_twist(g, [2.6, 0.0], [1.8, 0.0], gamma).unwrap();
            let (_, run) =
                davies_evolve(&coeffs, &tw, &f, 0.0, 0.05, SolverParams::default()).unwrap();
            let report = twist_growth_report(&run, &consts, 1e-9);
            assert!(
                report.pass,
                "gamma {gamma}: rate {} > budget {}",
                report.measured_rate, report.budget
            );
            rates.push(report.measured_rate);
        }
        assert!(rates[0] <= rates[1] && rates[1] <= rates[2], "rates {rates:?}");

        let zero = build_twist(g, [2.6, 0.0], [1.8, 0.0], 0.0).unwrap();
        let (_, run0) =
            davies_evolve(&coeffs, &zero, &f, 0.0, 0.05, SolverParams::default()).unwrap();
        let r0 = twist_growth_report(&run0, &consts, 1e-9);
        assert!(r0.measured_rate <= 1e-9);
    }

    #[test]
    fn conjugating_back_recovers_plain_evolution() {
        let coeffs = heat_1d(64, 2.0, 2e-4, 0.01);
        let g = &coeffs.grid;
        let tw = build_twist(g, [1.2, 0.0], [0.8, 0.0], 1.0).unwrap();
        let f0 = SpaceField::from_fn(g, |x, _| (3.0 * x[0]).cos());
        // twist the data first so the twisted run starts from e^{-psi} of it
        let mut twisted = SpaceField::zeros(g);
        for node in 0..g.num_nodes() {
            twisted.set(node, 0, tw.psi[node].exp() * f0.get(node, 0));
        }
        let (out, _) =
            davies_evolve(&coeffs, &tw, &twisted, 0.0, 0.01, SolverParams::default()).unwrap();
        let (plain, _) = solve_cauchy(&coeffs, &f0, 0.0, 0.01, SolverParams::default()).unwrap();
        let last = g.num_levels() - 1;
        for node in 0..g.num_nodes() {
            let want = plain.get(last, node, 0);
            let got = (-tw.psi[node]).exp() * out.get(node, 0);
            assert!((got - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn gaussian_fit_exact_on_oracle_values() {
        for (n, a) in [(1usize, 1.0f64), (1, 2.0), (2, 1.0)] {
            let mut points = Vec::new();
            for ti in 1..=6 {
                let tau = 0.05 * ti as f64;
                for di in 0..=10 {
                    let dist = 0.05 * di as f64;
                    let c = (4.0 * std::f64::consts::PI * a * tau).powf(-(n as f64) / 2.0);
                    let value = c * (-dist * dist / (4.0 * a * tau)).exp();
                    points.push(FitPoint { tau, dist, value });
                }
            }
            let fit = gaussian_fit(n, &points, 1e-12).unwrap();
            assert!((fit.kappa_fit - 1.0 / (4.0 * a)).abs() < 1e-12, "kappa {}", fit.kappa_fit);
            let c_true = (4.0 * std::f64::consts::PI * a).powf(-(n as f64) / 2.0);
            assert!((fit.c_fit - c_true).abs() < 1e-12 * c_true);
            assert!(fit.rms_residual < 1e-12);
            assert!((fit.c_sup - c_true).abs() < 1e-12 * c_true);
        }
    }

    #[test]
    fn gaussian_fit_error_paths_and_fail_verdict() {
        assert!(matches!(gaussian_fit(1, &[], 1e-12), Err(Error::EmptyWindow)));
        let below: Vec<FitPoint> =
            (0..5).map(|k| FitPoint { tau: 0.1, dist: 0.1 * k as f64, value: 1e-15 }).collect();
        assert!(matches!(gaussian_fit(1, &below, 1e-12), Err(Error::EmptyWindow)));
        let same_xi: Vec<FitPoint> =
            (1..5).map(|k| FitPoint { tau: 0.1 * k as f64, dist: 0.0, value: 0.3 }).collect();
        assert!(matches!(gaussian_fit(1, &same_xi, 1e-12), Err(Error::DegenerateFit)));

        // distance-flat fake data: kappa ~ 0, below any positive kappa_paper
        let flat: Vec<FitPoint> = (0..20)
            .map(|k| FitPoint { tau: 1.0, dist: 0.05 * k as f64, value: 0.25 })
            .collect();
        let fit = gaussian_fit(1, &flat, 1e-12).unwrap();
        let consts = paper_constants(1.0, 1.0, 0.0, 1.0).unwrap();
        let verdict = bound_verdict(&fit, &consts);
        assert!(!verdict.pass, "flat data must fail, kappa_fit {}", fit.kappa_fit);
    }

    #[test]
    fn fit_is_permutation_invariant() {
        let mut points = Vec::new();
        for ti in 1..=4 {
            let tau = 0.1 * ti as f64;
            for di in 0..=6 {
                let dist = 0.07 * di as f64;
                let value = 0.3 * (-dist * dist / (4.0 * tau)).exp() / tau.sqrt();
                points.push(FitPoint { tau, dist, value });
            }
        }
        let fit = gaussian_fit(1, &points, 1e-12).unwrap();
        points.reverse();
        points.swap(0, 7);
        let fit2 = gaussian_fit(1, &points, 1e-12).unwrap();
        assert!((fit.kappa_fit - fit2.kappa_fit).abs() < 1e-12);
        assert!((fit.c_fit - fit2.c_fit).abs() < 1e-12 * fit.c_fit);
    }
}
