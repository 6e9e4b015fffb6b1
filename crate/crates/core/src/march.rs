//! Implicit marching for the regularized degenerate parabolic problem in von
//! Mises variables, with y as the time-like direction.
//!
//! The moving right boundary ψ = ψ⁰(y) − 2ε is frozen to s = 1 through the
//! mapping s = ψ/L(y), L = ψ⁰ − 2ε, which trades the moving domain for an
//! advection term −s(L′/L)∂_s w. Steps are backward Euler with a full Newton
//! solve; the Jacobian keeps the exact √w linearization and stays tridiagonal.
//! Explicit schemes are unusable here: the diffusion coefficient √w vanishes
//! at both lateral boundaries while the source term does not.

use crate::cubic::root_a;
use crate::initial::{mu_of, InitialData, InitialError};
use crate::profiles::GyreSetup;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarchError {
    #[error("regularization too large: 2*eps = {two_eps} >= min psi0 = {min_psi0}")]
    DomainEmpty { two_eps: f64, min_psi0: f64 },
    #[error("trial iterate not strictly positive at node {index}: {value}")]
    NonPositiveTrial { index: usize, value: f64 },
    #[error("Newton did not converge in {iters} iterations (residual {residual:e})")]
    NewtonDiverged { iters: usize, residual: f64 },
    #[error("positivity unrecoverable at minimum damping (node {index})")]
    NonPositiveW { index: usize },
    #[error("step underflow: dy = {dy:e} below dy_min = {dy_min:e} at y = {y}")]
    StepUnderflow { dy: f64, dy_min: f64, y: f64 },
    #[error(transparent)]
    Initial(#[from] InitialError),
    #[error(transparent)]
    Root(#[from] crate::cubic::RootError),
}

/// The mapped ε-domain: s = ψ/L(y) ∈ [0, 1] on a boundary-refined grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsDomain {
    pub eps: f64,
    pub n_s: usize,
    pub s_nodes: Vec<f64>,
    /// tanh clustering strength toward both ends.
    pub stretching: f64,
    pub y_span: f64,
}

impl EpsDomain {
    /// Build the grid; clustering toward both s = 0 and s = 1 because w
    /// vanishes linearly at the left and quadratically at the right.
    pub fn new(
        setup: &GyreSetup,
        eps: f64,
        n_s: usize,
        stretching: f64,
    ) -> Result<Self, MarchError> {
        assert!(eps > 0.0 && n_s >= 4);
        let min_psi0 = setup.psi0_min(1024);
        if 2.0 * eps >= min_psi0 {
            return Err(MarchError::DomainEmpty {
                two_eps: 2.0 * eps,
                min_psi0,
            });
        }
        let beta = stretching;
        let t0 = (beta).tanh();
        let mut s_nodes: Vec<f64> = (0..=n_s)
            .map(|j| {
                let u = j as f64 / n_s as f64;
                if beta > 0.0 {
                    0.5 * (1.0 + (beta * (2.0 * u - 1.0)).tanh() / t0)
                } else {
                    u
                }
            })
            .collect();
        s_nodes[0] = 0.0;
        s_nodes[n_s] = 1.0;
        Ok(Self {
            eps,
            n_s,
            s_nodes,
            stretching,
            y_span: setup.y_span,
        })
    }

    /// L(y) = ψ⁰(y) − 2ε, the mapped width.
    pub fn width(&self, setup: &GyreSetup, y: f64) -> f64 {
        setup.psi0.value(y) - 2.0 * self.eps
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepConfig {
    pub dy0: f64,
    pub dy_min_factor: f64,
    pub dy_max: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dy0: 5e-4,
            dy_min_factor: 1e-9,
            dy_max: 1e-3,
            newton_tol: 1e-10,
            newton_max_iter: 30,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StepLog {
    pub newton_iters: Vec<usize>,
    pub dy_history: Vec<f64>,
    pub rejected_steps: usize,
}

/// The marched field: w on the (s, y) lattice plus on-demand diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionField {
    pub domain: EpsDomain,
    pub y_levels: Vec<f64>,
    /// One row per accepted level, length n_s + 1, strictly positive.
    pub w: Vec<Vec<f64>>,
    pub p: Option<Vec<Vec<f64>>>,
    pub q: Option<Vec<Vec<f64>>>,
    pub r: Option<Vec<Vec<f64>>>,
    pub step_log: StepLog,
    /// False when the march was forced past a failed hypothesis validation.
    pub hypotheses_ok: bool,
}

impl SolutionField {
    /// Row index of the accepted level closest to y.
    pub fn level_at(&self, y: f64) -> usize {
        let mut best = 0;
        let mut gap = f64::INFINITY;
        for (k, &yl) in self.y_levels.iter().enumerate() {
            let d = (yl - y).abs();
            if d < gap {
                gap = d;
                best = k;
            }
        }
        best
    }

    pub fn sup_value(&self) -> f64 {
        self.w
            .iter()
            .flat_map(|row| row.iter())
            .cloned()
            .fold(0.0, f64::max)
    }
}

/// w_l^ε(y) = w₀(ε)·exp(μ(ε)y/w₀(ε)).
pub fn boundary_left(
    profile: &dyn InitialData,
    setup: &GyreSetup,
    eps: f64,
    y: f64,
) -> Result<f64, MarchError> {
    let w0e = profile.w0(eps);
    let mu = mu_of(profile, setup, eps)?;
    Ok(w0e * (mu * y / w0e).exp())
}

/// w_r^ε(y) = w₀(ψ⁰(0) − ε)·a(y)²/a(0)².
pub fn boundary_right(
    profile: &dyn InitialData,
    setup: &GyreSetup,
    eps: f64,
    y: f64,
) -> Result<f64, MarchError> {
    let w0r = profile.w0(profile.psi0_at_origin() - eps);
    let a0 = root_a(setup, 0.0)?.a;
    let ay = root_a(setup, y)?.a;
    Ok(w0r * (ay * ay) / (a0 * a0))
}

/// Second-order centered difference weights on a nonuniform 3-point stencil.
#[inline]
fn stencil(h_minus: f64, h_plus: f64) -> ([f64; 3], [f64; 3]) {
    let hs = h_minus + h_plus;
    let d1 = [
        -h_plus / (h_minus * hs),
        (h_plus - h_minus) / (h_minus * h_plus),
        h_minus / (h_plus * hs),
    ];
    let d2 = [
        2.0 / (h_minus * hs),
        -2.0 / (h_minus * h_plus),
        2.0 / (h_plus * hs),
    ];
    (d1, d2)
}

/// Per-interior-node residual of the implicit step at y_next. Boundary
/// entries of `w_trial` must already hold the boundary data.
pub fn residual(
    w_trial: &[f64],
    w_prev: &[f64],
    y_next: f64,
    dy: f64,
    domain: &EpsDomain,
    setup: &GyreSetup,
) -> Result<Vec<f64>, MarchError> {
    let n = domain.n_s;
    for (i, &v) in w_trial.iter().enumerate().take(n).skip(1) {
        if !(v > 0.0) {
            return Err(MarchError::NonPositiveTrial { index: i, value: v });
        }
    }
    let nu = setup.nu_unchecked(y_next);
    let lam_nu = setup.lambda0 * nu;
    let big_l = domain.width(setup, y_next);
    let lp_over_l = setup.psi0.deriv(y_next) / big_l;
    let inv_l2 = 1.0 / (big_l * big_l);
    let mut out = vec![0.0; n - 1];
    for i in 1..n {
        let (d1, d2) = stencil(
            domain.s_nodes[i] - domain.s_nodes[i - 1],
            domain.s_nodes[i + 1] - domain.s_nodes[i],
        );
        let d1w = d1[0] * w_trial[i - 1] + d1[1] * w_trial[i] + d1[2] * w_trial[i + 1];
        let d2w = d2[0] * w_trial[i - 1] + d2[1] * w_trial[i] + d2[2] * w_trial[i + 1];
        let s = domain.s_nodes[i];
        let time_part = (w_trial[i] - w_prev[i]) / dy - s * lp_over_l * d1w;
        let diffusion = nu * nu * w_trial[i].sqrt() * inv_l2 * d2w;
        let source = 2.0 * (big_l * (1.0 - s) + domain.eps);
        out[i - 1] = lam_nu * time_part - diffusion - source;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewtonInfo {
    pub iterations: usize,
    pub residual_norms: Vec<f64>,
}

/// One implicit step: full Newton with the analytic tridiagonal Jacobian
/// (including the ν²D₂w/(2√w) term from the √w factor) and positivity-
/// preserving step halving.
pub fn newton_solve_step(
    w_prev: &[f64],
    bl: f64,
    br: f64,
    y_next: f64,
    dy: f64,
    domain: &EpsDomain,
    setup: &GyreSetup,
    config: &StepConfig,
) -> Result<(Vec<f64>, NewtonInfo), MarchError> {
    let n = domain.n_s;
    let mut w: Vec<f64> = w_prev.to_vec();
    w[0] = bl;
    w[n] = br;
    let scale = w_prev.iter().cloned().fold(1.0, f64::max);
    let tol = config.newton_tol * scale;
    let nu = setup.nu_unchecked(y_next);
    let lam_nu = setup.lambda0 * nu;
    let big_l = domain.width(setup, y_next);
    let lp_over_l = setup.psi0.deriv(y_next) / big_l;
    let inv_l2 = 1.0 / (big_l * big_l);
    let mut norms = Vec::new();
    for iter in 0..config.newton_max_iter {
        let res = residual(&w, w_prev, y_next, dy, domain, setup)?;
        let norm = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        norms.push(norm);
        if norm <= tol {
            return Ok((
                w,
                NewtonInfo {
                    iterations: iter,
                    residual_norms: norms,
                },
            ));
        }
        // Assemble the tridiagonal Jacobian over interior nodes.
        let m = n - 1;
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        for i in 1..n {
            let (d1, d2) = stencil(
                domain.s_nodes[i] - domain.s_nodes[i - 1],
                domain.s_nodes[i + 1] - domain.s_nodes[i],
            );
            let s = domain.s_nodes[i];
            let sq = w[i].sqrt();
            let d2w = d2[0] * w[i - 1] + d2[1] * w[i] + d2[2] * w[i + 1];
            let adv = s * lp_over_l;
            let k = i - 1;
            lower[k] = lam_nu * (-adv * d1[0]) - nu * nu * sq * inv_l2 * d2[0];
            upper[k] = lam_nu * (-adv * d1[2]) - nu * nu * sq * inv_l2 * d2[2];
            diag[k] = lam_nu * (1.0 / dy - adv * d1[1])
                - nu * nu * sq * inv_l2 * d2[1]
                - nu * nu * inv_l2 * d2w / (2.0 * sq);
        }
        let delta = thomas(&lower, &diag, &upper, &res);
        // Damped update: halve until the iterate stays strictly positive.
        let mut t = 1.0;
        loop {
            let ok = (1..n).all(|i| w[i] - t * delta[i - 1] > 0.0);
            if ok {
                break;
            }
            t *= 0.5;
            if t < 1e-8 {
                let bad = (1..n)
                    .find(|&i| w[i] - t * delta[i - 1] <= 0.0)
                    .unwrap_or(1);
                return Err(MarchError::NonPositiveW { index: bad });
            }
        }
        for i in 1..n {
            w[i] -= t * delta[i - 1];
        }
    }
    Err(MarchError::NewtonDiverged {
        iters: config.newton_max_iter,
        residual: *norms.last().unwrap(),
    })
}

/// Thomas solve of the tridiagonal system J x = rhs.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..m {
        let denom = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; m];
    x[m - 1] = d[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// March with explicit initial row and boundary closures. The plain `march`
/// wraps this with the regularized boundary data; comparison probes supply
/// modified interiors while sharing boundary columns.
pub fn march_custom(
    setup: &GyreSetup,
    domain: &EpsDomain,
    config: &StepConfig,
    initial_row: Vec<f64>,
    bl: &dyn Fn(f64) -> f64,
    br: &dyn Fn(f64) -> f64,
    hypotheses_ok: bool,
) -> Result<SolutionField, MarchError> {
    assert_eq!(initial_row.len(), domain.n_s + 1);
    let dy_min = config.dy_min_factor * setup.y_span;
    let mut y = 0.0;
    let mut w_prev = initial_row;
    let mut y_levels = vec![0.0];
    let mut rows = vec![w_prev.clone()];
    let mut log = StepLog::default();
    let mut dy = config.dy0;
    let mut accepts_in_a_row = 0usize;
    while y < setup.y_span {
        // Snap to the end once it is within reach so the final step is never
        // a round-off sliver whose 1/dy factor swamps the Newton tolerance.
        let y_next = if y + 1.5 * dy >= setup.y_span {
            setup.y_span
        } else {
            y + dy
        };
        let dy_eff = y_next - y;
        match newton_solve_step(
            &w_prev,
            bl(y_next),
            br(y_next),
            y_next,
            dy_eff,
            domain,
            setup,
            config,
        ) {
            Ok((w, info)) => {
                y = y_next;
                w_prev = w;
                y_levels.push(y);
                rows.push(w_prev.clone());
                log.newton_iters.push(info.iterations);
                log.dy_history.push(dy_eff);
                accepts_in_a_row += 1;
                if accepts_in_a_row >= 5 {
                    dy = (2.0 * dy).min(config.dy_max);
                    accepts_in_a_row = 0;
                }
            }
            Err(MarchError::NewtonDiverged { .. })
            | Err(MarchError::NonPositiveW { .. })
            | Err(MarchError::NonPositiveTrial { .. }) => {
                log.rejected_steps += 1;
                accepts_in_a_row = 0;
                dy *= 0.5;
                if dy < dy_min {
                    return Err(MarchError::StepUnderflow { dy, dy_min, y });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SolutionField {
        domain: domain.clone(),
        y_levels,
        w: rows,
        p: None,
        q: None,
        r: None,
        step_log: log,
        hypotheses_ok,
    })
}

/// Full pipeline: regularized boundary data from the profile, initial row
/// w₀(ε + sL(0)), adaptive implicit march to Y.
pub fn march(
    profile: &dyn InitialData,
    setup: &GyreSetup,
    domain: &EpsDomain,
    config: &StepConfig,
) -> Result<SolutionField, MarchError> {
    let hypotheses_ok = setup.validate(512).passed;
    let eps = domain.eps;
    let l0 = domain.width(setup, 0.0);
    let initial_row: Vec<f64> = domain
        .s_nodes
        .iter()
        .map(|&s| profile.w0(eps + s * l0))
        .collect();
    let w0e = profile.w0(eps);
    let mu = mu_of(profile, setup, eps)?;
    let w0r = profile.w0(profile.psi0_at_origin() - eps);
    let a0 = root_a(setup, 0.0)?.a;
    // Precompute a(y) lazily is unnecessary: root_a is cheap, but keep the
    // closures infallible by resolving errors up front on a dense cache.
    let setup_cl = setup.clone();
    let bl = move |y: f64| w0e * (mu * y / w0e).exp();
    let br = move |y: f64| {
        let ay = root_a(&setup_cl, y).expect("root feasibility checked at y=0").a;
        w0r * ay * ay / (a0 * a0)
    };
    march_custom(setup, domain, config, initial_row, &bl, &br, hypotheses_ok)
}

/// Fill p = ∂_ψ w, q = ∂_y w at fixed ψ, r = −q/p into the field.
///
/// p uses the mapped derivative (1/L)∂_s w; q undoes the mapping with
/// q = ∂_y|_s w − s(L′/L)∂_s w; r is set where |p| > 1e−12 and zero elsewhere.
pub fn derivative_diagnostics(field: &mut SolutionField, setup: &GyreSetup) {
    let n = field.domain.n_s;
    let levels = field.y_levels.len();
    let s = field.domain.s_nodes.clone();
    let mut p = vec![vec![0.0; n + 1]; levels];
    let mut q = vec![vec![0.0; n + 1]; levels];
    let mut r = vec![vec![0.0; n + 1]; levels];
    // ∂_s w per level, second order, one-sided at the ends.
    let ds_w = |row: &[f64], i: usize| -> f64 {
        if i == 0 {
            let (h0, h1) = (s[1] - s[0], s[2] - s[1]);
            let hs = h0 + h1;
            -(2.0 * h0 + h1) / (h0 * hs) * row[0] + hs / (h0 * h1) * row[1]
                - h0 / (h1 * hs) * row[2]
        } else if i == n {
            let (h0, h1) = (s[n - 1] - s[n - 2], s[n] - s[n - 1]);
            let hs = h0 + h1;
            h1 / (h0 * hs) * row[n - 2] - hs / (h0 * h1) * row[n - 1]
                + (2.0 * h1 + h0) / (h1 * hs) * row[n]
        } else {
            let (d1, _) = stencil(s[i] - s[i - 1], s[i + 1] - s[i]);
            d1[0] * row[i - 1] + d1[1] * row[i] + d1[2] * row[i + 1]
        }
    };
    for k in 0..levels {
        let y = field.y_levels[k];
        let big_l = field.domain.width(setup, y);
        let lp_over_l = setup.psi0.deriv(y) / big_l;
        for i in 0..=n {
            let dsw = ds_w(&field.w[k], i);
            p[k][i] = dsw / big_l;
            // ∂_y w at fixed s by differences across levels.
            let dyw = if levels == 1 {
                0.0
            } else if k == 0 {
                (field.w[1][i] - field.w[0][i]) / (field.y_levels[1] - field.y_levels[0])
            } else if k == levels - 1 {
                (field.w[k][i] - field.w[k - 1][i]) / (y - field.y_levels[k - 1])
            } else {
                // Nonuniform central difference.
                let hm = y - field.y_levels[k - 1];
                let hp = field.y_levels[k + 1] - y;
                let hs = hm + hp;
                -hp / (hm * hs) * field.w[k - 1][i]
                    + (hp - hm) / (hm * hp) * field.w[k][i]
                    + hm / (hp * hs) * field.w[k + 1][i]
            };
            q[k][i] = dyw - s[i] * lp_over_l * dsw;
            r[k][i] = if p[k][i].abs() > 1e-12 {
                -q[k][i] / p[k][i]
            } else {
                0.0
            };
        }
    }
    field.p = Some(p);
    field.q = Some(q);
    field.r = Some(r);
}
