//! Macroscopic layer: the driven nonlinear diffusion equation
//! `∂t ρ = ℓ ∂x{χ(ρ)[∂x f'(ρ) − E]}`, its stationary profiles, the
//! first-order quasi-static correction, and shape diagnostics for the
//! a-priori bounds.
//!
//! The diffusive part of the flux is discretized through the integrated
//! diffusivity `d(ρ) = ∫₀^ρ D` (so `−D ∂x ρ` becomes exact differences of
//! `d`), the drift through the mobility at face-averaged densities. This
//! keeps the scheme conservative and makes linear-in-`d` stationary states
//! exact at the nodes.

use crate::error::{Error, Result};
use crate::measures::Transport;
use crate::model::{DriveSchedule, TimeFn};

/// Function values on the uniform grid `x_i = i/M` of `[0,1]` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridProfile {
    pub t: f64,
    pub values: Vec<f64>,
}

impl GridProfile {
    pub fn from_fn(m: usize, t: f64, f: impl Fn(f64) -> f64) -> Self {
        GridProfile {
            t,
            values: (0..=m).map(|i| f(i as f64 / m as f64)).collect(),
        }
    }

    pub fn constant(m: usize, t: f64, v: f64) -> Self {
        GridProfile {
            t,
            values: vec![v; m + 1],
        }
    }

    pub fn m(&self) -> usize {
        self.values.len() - 1
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.m() as f64
    }

    /// Piecewise-linear interpolation; `x` is clamped to `[0,1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let m = self.m() as f64;
        let s = (x.clamp(0.0, 1.0)) * m;
        let i = (s.floor() as usize).min(self.m() - 1);
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Trapezoidal integral over `[0,1]`.
    pub fn integral(&self) -> f64 {
        let m = self.m() as f64;
        let inner: f64 = self.values[1..self.m()].iter().sum();
        (inner + 0.5 * (self.values[0] + self.values[self.m()])) / m
    }
}

/// Trapezoidal `L²([0,1])` distance between two profiles on the same grid.
pub fn l2_distance(a: &GridProfile, b: &GridProfile) -> f64 {
    assert_eq!(a.m(), b.m(), "profiles on different grids");
    let m = a.m();
    let sq = |i: usize| {
        let d = a.values[i] - b.values[i];
        d * d
    };
    let inner: f64 = (1..m).map(sq).sum();
    ((inner + 0.5 * (sq(0) + sq(m))) / m as f64).sqrt()
}

/// Discretization and Newton controls.
#[derive(Debug, Clone)]
pub struct SolverParams {
    pub m: usize,
    /// Macroscopic time step; scale by `1/ℓ` for accelerated equations.
    pub dt: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl SolverParams {
    /// Documented defaults: `M = 256`, `dt = 1e-3/ℓ`, Newton tolerance 1e-11.
    pub fn for_ell(ell: f64) -> Self {
        SolverParams {
            m: 256,
            dt: 1e-3 / ell,
            newton_tol: 1e-11,
            max_newton: 50,
        }
    }
}

/// Thomas solve of a tridiagonal system; diagonals `(a, b, c)` hold the
/// sub-, main- and super-diagonal. Overwrites its scratch inputs.
fn solve_tridiagonal(
    a: &[f64],
    b: &[f64],
    c: &[f64],
    rhs: &[f64],
    out: &mut Vec<f64>,
) -> Result<()> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut beta = b[0];
    if beta.abs() < 1e-300 {
        return Err(Error::Singular("tridiagonal pivot vanished".into()));
    }
    cp[0] = c[0] / beta;
    dp[0] = rhs[0] / beta;
    for i in 1..n {
        beta = b[i] - a[i] * cp[i - 1];
        if beta.abs() < 1e-300 {
            return Err(Error::Singular("tridiagonal pivot vanished".into()));
        }
        cp[i] = c[i] / beta;
        dp[i] = (rhs[i] - a[i] * dp[i - 1]) / beta;
    }
    out.clear();
    out.resize(n, 0.0);
    out[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = dp[i] - cp[i] * out[i + 1];
    }
    Ok(())
}

/// Right-hand side `ℓ ∂x{∂x d(ρ) − χ(ρ)E}` at the interior nodes of the full
/// vector `rho` (boundary values included), evaluated at time `t`.
fn parabolic_rhs(
    transport: &Transport,
    drive: &DriveSchedule,
    t: f64,
    rho: &[f64],
    out: &mut [f64],
) {
    let m = rho.len() - 1;
    let mf = m as f64;
    let ell = drive.ell;
    // Face fluxes J_{i+1/2} = -M [d(rho_{i+1}) - d(rho_i)] + chi(mean) E.
    let mut flux_left = face_flux(transport, drive, t, rho, 0);
    for i in 1..m {
        let flux_right = face_flux(transport, drive, t, rho, i);
        out[i - 1] = -ell * mf * (flux_right - flux_left);
        flux_left = flux_right;
    }
}

#[inline]
fn face_flux(transport: &Transport, drive: &DriveSchedule, t: f64, rho: &[f64], i: usize) -> f64 {
    let m = rho.len() - 1;
    let mf = m as f64;
    let diff = -mf * (transport.kirchhoff(rho[i + 1]) - transport.kirchhoff(rho[i]));
    let x_face = (i as f64 + 0.5) / mf;
    let e = drive.field.eval(t, x_face);
    if e == 0.0 {
        diff
    } else {
        diff + transport.mobility(0.5 * (rho[i] + rho[i + 1])) * e
    }
}

/// Tridiagonal Jacobian of `parabolic_rhs` with respect to the interior
/// unknowns; diagonals returned in `(a, b, c)`.
fn parabolic_jacobian(
    transport: &Transport,
    drive: &DriveSchedule,
    t: f64,
    rho: &[f64],
    a: &mut [f64],
    b: &mut [f64],
    c: &mut [f64],
) {
    let m = rho.len() - 1;
    let mf = m as f64;
    let ell = drive.ell;
    for i in 1..m {
        let x_r = (i as f64 + 0.5) / mf;
        let x_l = (i as f64 - 0.5) / mf;
        let e_r = drive.field.eval(t, x_r);
        let e_l = drive.field.eval(t, x_l);
        let chi_p_r = transport.mobility_prime(0.5 * (rho[i] + rho[i + 1]));
        let chi_p_l = transport.mobility_prime(0.5 * (rho[i - 1] + rho[i]));
        let d_im = transport.diffusivity(rho[i - 1]);
        let d_i = transport.diffusivity(rho[i]);
        let d_ip = transport.diffusivity(rho[i + 1]);
        let k = i - 1;
        a[k] = ell * (mf * mf * d_im + 0.5 * mf * chi_p_l * e_l);
        b[k] = ell * (-2.0 * mf * mf * d_i - 0.5 * mf * (chi_p_r * e_r - chi_p_l * e_l));
        c[k] = ell * (mf * mf * d_ip - 0.5 * mf * chi_p_r * e_r);
    }
}

/// Parabolic solution: profiles at the report times plus bookkeeping.
#[derive(Debug, Clone)]
pub struct ParabolicSolution {
    pub profiles: Vec<GridProfile>,
    /// |interior-mass change − time-integrated boundary fluxes| over the run.
    pub mass_residual: f64,
    pub newton_iterations: usize,
    pub steps: usize,
}

/// Implicit-trapezoidal (Crank–Nicolson) integration of the driven
/// diffusion equation with Dirichlet boundary densities from the drive.
pub fn solve_parabolic(
    transport: &Transport,
    drive: &DriveSchedule,
    rho0: &GridProfile,
    report_times: &[f64],
    params: &SolverParams,
) -> Result<ParabolicSolution> {
    let m = rho0.m();
    if m < 16 {
        return Err(Error::Validation("need a grid with M >= 16".into()));
    }
    if report_times.is_empty()
        || report_times[0] < 0.0
        || report_times.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::Validation(
            "report times must be positive and increasing".into(),
        ));
    }
    let t_end = *report_times.last().unwrap();
    drive.validate(t_end)?;
    if params.dt <= 0.0 || params.newton_tol <= 0.0 {
        return Err(Error::Validation("invalid solver parameters".into()));
    }
    // Startup compatibility: the initial profile must meet the reservoirs.
    if (rho0.values[0] - drive.alpha0(0.0)).abs() > 1e-8
        || (rho0.values[m] - drive.alpha1(0.0)).abs() > 1e-8
    {
        return Err(Error::Validation(
            "initial profile does not match the boundary densities at t = 0".into(),
        ));
    }
    if rho0.values.iter().any(|&v| !(0.0 < v && v < 1.0)) {
        return Err(Error::Validation(
            "initial densities must lie strictly inside (0,1)".into(),
        ));
    }

    // Invariant region for the discrete maximum principle.
    let (a0_lo, a0_hi) = drive.alpha_left.range(0.0, t_end);
    let (a1_lo, a1_hi) = drive.alpha_right.range(0.0, t_end);
    let lo = rho0
        .values
        .iter()
        .cloned()
        .fold(a0_lo.min(a1_lo), f64::min);
    let hi = rho0
        .values
        .iter()
        .cloned()
        .fold(a0_hi.max(a1_hi), f64::max);
    // Every supported field is uniform in x, so the invariant region of the
    // initial data and the reservoir densities applies.
    let uniform_field = true;

    let mf = m as f64;
    let mut rho = rho0.values.clone();
    let mut t = 0.0f64;
    let mut profiles = Vec::with_capacity(report_times.len());
    let mut next_report = 0usize;
    let mut newton_total = 0usize;
    let mut steps = 0usize;

    // Conservation bookkeeping: interior mass vs integrated boundary fluxes.
    let interior_mass =
        |r: &[f64]| -> f64 { r[1..m].iter().sum::<f64>() / mf };
    let mass0 = interior_mass(&rho);
    let mut flux_integral = 0.0f64;

    let mut rhs_old = vec![0.0; m - 1];
    let mut rhs_new = vec![0.0; m - 1];
    let mut residual = vec![0.0; m - 1];
    let mut delta = Vec::with_capacity(m - 1);
    let mut ja = vec![0.0; m - 1];
    let mut jb = vec![0.0; m - 1];
    let mut jc = vec![0.0; m - 1];

    while next_report < report_times.len() {
        let target = report_times[next_report];
        if t >= target - 1e-14 * t_end.max(1.0) {
            profiles.push(GridProfile {
                t: target,
                values: rho.clone(),
            });
            next_report += 1;
            continue;
        }
        let dt = params.dt.min(target - t);
        let t_new = t + dt;

        parabolic_rhs(transport, drive, t, &rho, &mut rhs_old);
        let boundary_flux_old =
            face_flux(transport, drive, t, &rho, 0) - face_flux(transport, drive, t, &rho, m - 1);

        // Newton for the trapezoidal stage equation.
        let mut rho_new = rho.clone();
        rho_new[0] = drive.alpha0(t_new);
        rho_new[m] = drive.alpha1(t_new);
        let mut converged = false;
        let mut res_norm = f64::INFINITY;
        for iter in 0..params.max_newton {
            parabolic_rhs(transport, drive, t_new, &rho_new, &mut rhs_new);
            res_norm = 0.0;
            for i in 1..m {
                let g = rho_new[i] - rho[i] - 0.5 * dt * (rhs_new[i - 1] + rhs_old[i - 1]);
                residual[i - 1] = g;
                res_norm = res_norm.max(g.abs());
            }
            if res_norm <= params.newton_tol {
                converged = true;
                newton_total += iter;
                break;
            }
            parabolic_jacobian(transport, drive, t_new, &rho_new, &mut ja, &mut jb, &mut jc);
            // Stage Jacobian: I - (dt/2) d(rhs)/d(rho).
            for k in 0..m - 1 {
                ja[k] *= -0.5 * dt;
                jb[k] = 1.0 - 0.5 * dt * jb[k];
                jc[k] *= -0.5 * dt;
            }
            for v in residual.iter_mut() {
                *v = -*v;
            }
            solve_tridiagonal(&ja, &jb, &jc, &residual, &mut delta)?;

            // Damped update: halve the step until the residual drops.
            let mut scale = 1.0f64;
            let base_norm = res_norm;
            loop {
                let mut trial = rho_new.clone();
                for i in 1..m {
                    trial[i] += scale * delta[i - 1];
                }
                parabolic_rhs(transport, drive, t_new, &trial, &mut rhs_new);
                let mut trial_norm = 0.0f64;
                for i in 1..m {
                    let g = trial[i] - rho[i] - 0.5 * dt * (rhs_new[i - 1] + rhs_old[i - 1]);
                    trial_norm = trial_norm.max(g.abs());
                }
                if trial_norm < base_norm || scale < 1.0 / 1024.0 {
                    rho_new = trial;
                    break;
                }
                scale *= 0.5;
            }
        }
        if !converged {
            return Err(Error::NewtonDiverged {
                t: t_new,
                residual: res_norm,
                iters: params.max_newton,
            });
        }

        // Density must stay inside (0,1); for spatially uniform fields the
        // invariant region of the data and the reservoirs also holds.
        for (i, &v) in rho_new.iter().enumerate() {
            let violates = !(0.0 < v && v < 1.0)
                || (uniform_field && (v < lo - 1e-9 || v > hi + 1e-9));
            if violates {
                return Err(Error::MaxPrinciple {
                    t: t_new,
                    x: i as f64 / mf,
                    value: v,
                });
            }
        }

        let boundary_flux_new = face_flux(transport, drive, t_new, &rho_new, 0)
            - face_flux(transport, drive, t_new, &rho_new, m - 1);
        flux_integral += 0.5 * dt * drive.ell * (boundary_flux_old + boundary_flux_new);

        rho = rho_new;
        t = t_new;
        steps += 1;
    }

    let mass_residual = ((interior_mass(&rho) - mass0) - flux_integral).abs();
    Ok(ParabolicSolution {
        profiles,
        mass_residual,
        newton_iterations: newton_total,
        steps,
    })
}

/// Stationary profile of `∂x{∂x d(ρ) − χ(ρ)E(x)} = 0` with Dirichlet
/// boundary densities; damped Newton from the linear interpolant.
pub fn solve_stationary(
    transport: &Transport,
    alpha0: f64,
    alpha1: f64,
    e_field: impl Fn(f64) -> f64,
    m: usize,
) -> Result<GridProfile> {
    if m < 16 {
        return Err(Error::Validation("need a grid with M >= 16".into()));
    }
    if !(0.0 < alpha0 && alpha0 < 1.0 && 0.0 < alpha1 && alpha1 < 1.0) {
        return Err(Error::Validation(
            "boundary densities must lie inside (0,1)".into(),
        ));
    }
    let mf = m as f64;
    let drive_like = |rho: &[f64], out: &mut [f64]| {
        // Flux divergence with time-frozen field.
        let face = |r: &[f64], i: usize| -> f64 {
            let diff = -mf * (transport.kirchhoff(r[i + 1]) - transport.kirchhoff(r[i]));
            let e = e_field((i as f64 + 0.5) / mf);
            diff + transport.mobility(0.5 * (r[i] + r[i + 1])) * e
        };
        let mut left = face(rho, 0);
        for i in 1..m {
            let right = face(rho, i);
            out[i - 1] = -mf * (right - left);
            left = right;
        }
    };

    let mut rho: Vec<f64> =
        (0..=m).map(|i| alpha0 + (alpha1 - alpha0) * i as f64 / mf).collect();
    let mut g = vec![0.0; m - 1];
    let mut delta = Vec::new();
    let mut ja = vec![0.0; m - 1];
    let mut jb = vec![0.0; m - 1];
    let mut jc = vec![0.0; m - 1];

    // Damped restarts: shrink the maximum Newton step on failure.
    for &max_scale in &[1.0, 0.5, 0.125] {
        let mut iterations = 0usize;
        rho.iter_mut().enumerate().for_each(|(i, v)| {
            *v = alpha0 + (alpha1 - alpha0) * i as f64 / mf;
        });
        loop {
            drive_like(&rho, &mut g);
            let res = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if res <= 1e-10 {
                return Ok(GridProfile { t: 0.0, values: rho });
            }
            if iterations >= 100 {
                break;
            }
            for i in 1..m {
                let x_r = (i as f64 + 0.5) / mf;
                let x_l = (i as f64 - 0.5) / mf;
                let e_r = e_field(x_r);
                let e_l = e_field(x_l);
                let chi_p_r = transport.mobility_prime(0.5 * (rho[i] + rho[i + 1]));
                let chi_p_l = transport.mobility_prime(0.5 * (rho[i - 1] + rho[i]));
                let k = i - 1;
                ja[k] = mf * mf * transport.diffusivity(rho[i - 1]) + 0.5 * mf * chi_p_l * e_l;
                jb[k] = -2.0 * mf * mf * transport.diffusivity(rho[i])
                    - 0.5 * mf * (chi_p_r * e_r - chi_p_l * e_l);
                jc[k] = mf * mf * transport.diffusivity(rho[i + 1]) - 0.5 * mf * chi_p_r * e_r;
            }
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            solve_tridiagonal(&ja, &jb, &jc, &rhs, &mut delta)?;
            let mut scale = max_scale;
            // Keep the iterate inside (0,1).
            loop {
                let ok = (1..m).all(|i| {
                    let v = rho[i] + scale * delta[i - 1];
                    0.0 < v && v < 1.0
                });
                if ok || scale < 1e-6 {
                    break;
                }
                scale *= 0.5;
            }
            for i in 1..m {
                rho[i] += scale * delta[i - 1];
            }
            iterations += 1;
        }
    }
    drive_like(&rho, &mut g);
    let res = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Err(Error::NewtonDiverged {
        t: 0.0,
        residual: res,
        iters: 100,
    })
}

/// First-order correction: solves the linear elliptic equation
/// `∂t ρ̄ = ∂²x(D(ρ̄) v) − ∂x(χ'(ρ̄) E v)` with `v(0) = v(1) = 0`.
pub fn solve_correction(
    transport: &Transport,
    rho_bar: &GridProfile,
    drho_dt: &GridProfile,
    e_field: impl Fn(f64) -> f64,
    t: f64,
) -> Result<GridProfile> {
    let m = rho_bar.m();
    if drho_dt.m() != m {
        return Err(Error::Validation(
            "profile and time derivative live on different grids".into(),
        ));
    }
    let mf = m as f64;
    let g = |i: usize| transport.mobility_prime(rho_bar.values[i]) * e_field(i as f64 / mf);
    let mut a = vec![0.0; m - 1];
    let mut b = vec![0.0; m - 1];
    let mut c = vec![0.0; m - 1];
    let mut rhs = vec![0.0; m - 1];
    for i in 1..m {
        let k = i - 1;
        a[k] = mf * mf * transport.diffusivity(rho_bar.values[i - 1]) + 0.5 * mf * g(i - 1);
        b[k] = -2.0 * mf * mf * transport.diffusivity(rho_bar.values[i]);
        c[k] = mf * mf * transport.diffusivity(rho_bar.values[i + 1]) - 0.5 * mf * g(i + 1);
        rhs[k] = drho_dt.values[i];
    }
    let mut interior = Vec::new();
    solve_tridiagonal(&a, &b, &c, &rhs, &mut interior)?;
    let mut values = vec![0.0; m + 1];
    values[1..m].copy_from_slice(&interior);
    Ok(GridProfile { t, values })
}

/// Special case of [`solve_correction`] for a flat instantaneous profile:
/// `∂x(D(α) ∂x v) = α'` with constant coefficient.
pub fn solve_correction_uniform(
    transport: &Transport,
    alpha: f64,
    alpha_prime: f64,
    m: usize,
    t: f64,
) -> Result<GridProfile> {
    solve_correction(
        transport,
        &GridProfile::constant(m, t, alpha),
        &GridProfile::constant(m, t, alpha_prime),
        |_| 0.0,
        t,
    )
}

/// One row of a quasi-static comparison table.
#[derive(Debug, Clone, Copy)]
pub struct QuasiStaticRow {
    pub nu: f64,
    pub t: f64,
    /// `‖ν(ρ_ν(t,·) − α(t)) − v_t‖_{L²}`.
    pub gap: f64,
}

/// For every `ν`, runs the accelerated equation from `α(0) + v₀/ν` and
/// reports the L² distance between `u_ν = ν(ρ_ν − α)` and the correction
/// `v_t` at the requested times.
pub fn quasi_static_gap(
    transport: &Transport,
    alpha: &TimeFn,
    v0: impl Fn(f64) -> f64,
    nus: &[f64],
    report_times: &[f64],
    m: usize,
) -> Result<Vec<QuasiStaticRow>> {
    let mut rows = Vec::new();
    for &nu in nus {
        let sols = quasi_static_profiles(transport, alpha, &v0, nu, report_times, m)?;
        for profile in &sols.profiles {
            let t = profile.t;
            let a = alpha.eval(t);
            let u = GridProfile {
                t,
                values: profile.values.iter().map(|&r| nu * (r - a)).collect(),
            };
            let v = solve_correction_uniform(transport, a, alpha.deriv(t), m, t)?;
            rows.push(QuasiStaticRow {
                nu,
                t,
                gap: l2_distance(&u, &v),
            });
        }
    }
    Ok(rows)
}

/// Runs the `ℓ = ν` equation from the `α(0) + v₀/ν` initial profile.
pub fn quasi_static_profiles(
    transport: &Transport,
    alpha: &TimeFn,
    v0: impl Fn(f64) -> f64,
    nu: f64,
    report_times: &[f64],
    m: usize,
) -> Result<ParabolicSolution> {
    let drive = DriveSchedule {
        alpha_left: *alpha,
        alpha_right: *alpha,
        field: crate::model::FieldFn::Zero,
        epsilon: 1.0 / nu,
        ell: nu,
    };
    let a0 = alpha.eval(0.0);
    let rho0 = GridProfile::from_fn(m, 0.0, |x| a0 + v0(x) / nu);
    if rho0.values.iter().any(|&v| !(0.0 < v && v < 1.0)) {
        return Err(Error::Validation(
            "initial correction pushes the density outside (0,1)".into(),
        ));
    }
    let params = SolverParams {
        m,
        ..SolverParams::for_ell(nu)
    };
    solve_parabolic(transport, &drive, &rho0, report_times, &params)
}

/// Sup-norm diagnostics of one profile against the instantaneous flat
/// profile `α(t)`; second derivatives exclude the two boundary-adjacent
/// nodes on each side (one-sided stencils would pollute the sup-norm).
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub sup_deviation: f64,
    pub sup_dx: f64,
    pub sup_dxx: f64,
    /// `‖F‖_∞` with `F = ∂x f'(ρ) − E`.
    pub sup_f: f64,
    pub sup_dx_f: f64,
}

pub fn diagnostics_row(
    transport: &Transport,
    profile: &GridProfile,
    alpha_t: f64,
    e_field: impl Fn(f64) -> f64,
) -> DiagnosticsRow {
    let m = profile.m();
    let mf = m as f64;
    let v = &profile.values;
    let sup_deviation = v.iter().fold(0.0f64, |acc, &r| acc.max((r - alpha_t).abs()));
    let dx =
        |i: usize| -> f64 { 0.5 * mf * (v[i + 1] - v[i - 1]) };
    let sup_dx = (1..m).fold(0.0f64, |acc, i| acc.max(dx(i).abs()));
    let sup_dxx = (2..m.saturating_sub(1)).fold(0.0f64, |acc, i| {
        acc.max((mf * mf * (v[i + 1] - 2.0 * v[i] + v[i - 1])).abs())
    });
    let f_at = |i: usize| -> f64 {
        0.5 * mf * (transport.f_prime(v[i + 1]) - transport.f_prime(v[i - 1]))
            - e_field(i as f64 / mf)
    };
    let sup_f = (1..m).fold(0.0f64, |acc, i| acc.max(f_at(i).abs()));
    let sup_dx_f = (2..m.saturating_sub(1)).fold(0.0f64, |acc, i| {
        acc.max((0.5 * mf * (f_at(i + 1) - f_at(i - 1))).abs())
    });
    DiagnosticsRow {
        t: profile.t,
        sup_deviation,
        sup_dx,
        sup_dxx,
        sup_f,
        sup_dx_f,
    }
}

/// Diagnostics for one member of a `ν`-family.
#[derive(Debug, Clone)]
pub struct FamilyDiagnostics {
    pub nu: f64,
    pub epsilon: f64,
    pub rows: Vec<DiagnosticsRow>,
    /// Late-time plateau of `‖ρ(t) − α(t)‖_∞` (max over the last quarter of
    /// the reported times).
    pub plateau: f64,
}

/// Full a-priori-shape report across a family of solutions.
#[derive(Debug, Clone)]
pub struct AprioriReport {
    pub families: Vec<FamilyDiagnostics>,
    /// Log-log slope of the deviation plateau against `ν`.
    pub plateau_slope: f64,
    /// Smallest envelope constant `B` with
    /// `‖∂²x ρ(t)‖_∞ ≤ B √(ε² + ν⁻⁴)` across the family.
    pub dxx_envelope: f64,
    /// Largest distance of any density from the boundary of `(0,1)`:
    /// profiles stay inside `[δ, 1−δ]`.
    pub delta: f64,
    /// Largest `‖F‖_∞ · ν` seen (bounded along `ε = 1/ℓ` refinement).
    pub sup_f_times_ell: f64,
}

/// Computes diagnostics for solutions of the quasi-static family; inputs are
/// `(ν, ε, profiles)` triples on a common grid.
pub fn apriori_diagnostics(
    transport: &Transport,
    alpha: &TimeFn,
    family: &[(f64, f64, Vec<GridProfile>)],
    e_field: impl Fn(f64) -> f64,
) -> AprioriReport {
    let mut families = Vec::new();
    let mut delta: f64 = 0.5;
    let mut envelope: f64 = 0.0;
    let mut sup_f_times_ell: f64 = 0.0;
    for (nu, eps, profiles) in family {
        let rows: Vec<DiagnosticsRow> = profiles
            .iter()
            .map(|p| diagnostics_row(transport, p, alpha.eval(p.t), &e_field))
            .collect();
        let start = rows.len() - rows.len().div_euclid(4).max(1);
        let plateau = rows[start..]
            .iter()
            .fold(0.0f64, |acc, r| acc.max(r.sup_deviation));
        let env_scale = (eps * eps + nu.powi(-4)).sqrt();
        for r in &rows {
            envelope = envelope.max(r.sup_dxx / env_scale);
            sup_f_times_ell = sup_f_times_ell.max(r.sup_f * nu);
        }
        for p in profiles {
            for &v in &p.values {
                delta = delta.min(v.min(1.0 - v));
            }
        }
        families.push(FamilyDiagnostics {
            nu: *nu,
            epsilon: *eps,
            rows,
            plateau,
        });
    }
    // Least-squares slope of ln(plateau) vs ln(nu).
    let pts: Vec<(f64, f64)> = families
        .iter()
        .filter(|f| f.plateau > 0.0)
        .map(|f| (f.nu.ln(), f.plateau.ln()))
        .collect();
    let plateau_slope = fit_slope(&pts);
    AprioriReport {
        families,
        plateau_slope,
        dxx_envelope: envelope,
        delta,
        sup_f_times_ell,
    }
}

/// Least-squares slope through `(x, y)` points.
pub fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    num / den
}
