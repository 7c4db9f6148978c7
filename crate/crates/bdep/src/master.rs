//! Exact finite-state layer for small lattices: the full rate matrix over
//! the 2^{N-1} configurations, transient solutions of the Kolmogorov forward
//! equation by uniformization, stationary vectors, and exact relative-entropy
//! trajectories.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measures::{relative_entropy_general, ProductMeasure};
use crate::model::{bond_move, bond_rate, Configuration, DriveSchedule, Move, RateModel};

/// Largest number of sites N-1 the exact layer accepts (2^14 states).
pub const MASTER_CAPACITY: usize = 14;

/// Largest state count handled by the dense direct stationary solve.
const DENSE_STATIONARY_CAP: usize = 1 << 12;

/// Poisson tail mass discarded per uniformization step.
const UNIFORMIZATION_TAIL: f64 = 1e-14;

/// Cap on the Poisson mean of one uniformization step; keeps the series
/// short and the smallest weight well above underflow.
const MAX_POISSON_MEAN: f64 = 30.0;

/// Relative drive change allowed across one frozen-coefficient sub-interval.
const DRIVE_FREEZE_TOL: f64 = 1e-4;

fn check_capacity(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Validation("lattice needs N >= 2".into()));
    }
    if n - 1 > MASTER_CAPACITY {
        return Err(Error::Capacity(format!(
            "exact layer handles at most {} sites (2^{} states); got N-1 = {}",
            MASTER_CAPACITY,
            MASTER_CAPACITY,
            n - 1
        )));
    }
    Ok(())
}

/// Sparse rate matrix at a frozen time: per state, the list of
/// `(target state, rate)` moves that change the state, plus the exit rate.
#[derive(Debug)]
pub struct Generator {
    pub n: usize,
    pub states: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub exit: Vec<f64>,
}

impl Generator {
    /// Dense matrix `Q` with `Q[s][s'] = rate(s -> s')` off the diagonal and
    /// `Q[s][s] = -exit(s)`; rows sum to zero by construction.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.states, self.states);
        for s in 0..self.states {
            q[(s, s)] = -self.exit[s];
            for &(t, r) in &self.rows[s] {
                q[(s, t)] += r;
            }
        }
        q
    }

    /// Largest exit rate (the uniformization constant).
    pub fn max_exit(&self) -> f64 {
        self.exit.iter().cloned().fold(0.0, f64::max)
    }

    /// One step of the forward equation: `out = p + (dt') p Q` written as
    /// event bookkeeping, with `dt' = 1/lambda`.
    fn apply_uniformized(&self, lambda: f64, p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(p);
        for s in 0..self.states {
            let w = p[s] / lambda;
            if w == 0.0 {
                continue;
            }
            out[s] -= w * self.exit[s];
            for &(t, r) in &self.rows[s] {
                out[t] += w * r;
            }
        }
    }
}

/// Builds the generator of `L_N(t)` (unscaled: multiply time by the speedup
/// to evolve the accelerated chain).
pub fn build_generator(
    model: &RateModel,
    drive: &DriveSchedule,
    t: f64,
    n: usize,
) -> Result<Generator> {
    check_capacity(n)?;
    let states = 1usize << (n - 1);
    let mut rows = Vec::with_capacity(states);
    let mut exit = Vec::with_capacity(states);
    for key in 0..states as u64 {
        let eta = Configuration::from_bits(n, key);
        let mut row = Vec::with_capacity(n);
        let mut ex = 0.0;
        for bond in 0..n {
            if let Move::Exchange(j) = bond_move(bond, n) {
                if eta.get(j) == eta.get(j + 1) {
                    continue; // no state change
                }
            }
            let rate = bond_rate(model, drive, t, bond, &eta);
            let mut target = eta.clone();
            target.apply_move(bond_move(bond, n));
            row.push((target.to_bits() as usize, rate));
            ex += rate;
        }
        rows.push(row);
        exit.push(ex);
    }
    Ok(Generator {
        n,
        states,
        rows,
        exit,
    })
}

fn validate_p0(p0: &[f64], states: usize) -> Result<()> {
    if p0.len() != states {
        return Err(Error::Validation(format!(
            "probability vector has {} entries, expected {}",
            p0.len(),
            states
        )));
    }
    let mass: f64 = p0.iter().sum();
    if p0.iter().any(|&v| v < 0.0) || (mass - 1.0).abs() > 1e-10 {
        return Err(Error::Validation(
            "initial vector must be a probability distribution".into(),
        ));
    }
    Ok(())
}

/// Advances `p` across `[t0, t1]` (chain time scaled by `theta_time`) with
/// the generator frozen at the midpoint of each sub-interval. Uniformization
/// keeps the vector nonnegative and the mass exact up to the series tail.
fn advance(
    p: &mut Vec<f64>,
    model: &RateModel,
    drive: &DriveSchedule,
    theta_time: f64,
    n: usize,
    t0: f64,
    t1: f64,
) -> Result<()> {
    if t1 <= t0 {
        return Ok(());
    }
    let mut t = t0;
    let deriv = drive.max_abs_deriv();
    let dt_floor = (t1 - t0) * 1e-12;
    let mut scratch = vec![0.0; p.len()];
    while t < t1 {
        // Freeze the coefficients only while the drive barely moves.
        let dt_drive = if deriv > 0.0 {
            DRIVE_FREEZE_TOL / deriv
        } else {
            f64::INFINITY
        };
        let gen_probe = build_generator(model, drive, t, n)?;
        let lambda = (gen_probe.max_exit() * theta_time).max(1e-300);
        let dt_cap = dt_drive.min(MAX_POISSON_MEAN / lambda);
        if dt_cap < dt_floor {
            return Err(Error::StepFloor { t, dt: dt_cap });
        }
        let dt = dt_cap.min(t1 - t);
        let gen = if deriv > 0.0 {
            build_generator(model, drive, t + 0.5 * dt, n)?
        } else {
            gen_probe
        };
        // Uniformization constant over the sub-interval; the midpoint
        // generator is the frozen one, so its own max exit rate is exact.
        let lambda = (gen.max_exit() * theta_time).max(1e-300);
        let mu = lambda * dt;

        // w = running Poisson weight, v_k = p P^k, accumulate into `acc`.
        let mut weight = (-mu).exp();
        let mut acc: Vec<f64> = p.iter().map(|&v| v * weight).collect();
        let mut covered = weight;
        let mut k = 1u64;
        while covered < 1.0 - UNIFORMIZATION_TAIL {
            gen.apply_uniformized(lambda / theta_time, p, &mut scratch);
            std::mem::swap(p, &mut scratch);
            weight *= mu / k as f64;
            covered += weight;
            for (a, &v) in acc.iter_mut().zip(p.iter()) {
                *a += weight * v;
            }
            k += 1;
            if k > 10_000_000 {
                return Err(Error::Singular(
                    "uniformization series failed to converge".into(),
                ));
            }
        }
        // Discarding the tail loses at most UNIFORMIZATION_TAIL of mass.
        let mass: f64 = acc.iter().sum();
        for v in acc.iter_mut() {
            *v /= mass;
        }
        *p = acc;
        t += dt;
    }
    Ok(())
}

/// Solves the forward equation for the chain sped up by `theta_time`,
/// reporting the distribution at every requested time (times must be
/// nondecreasing, starting from 0).
pub fn evolve_forward(
    p0: &[f64],
    model: &RateModel,
    drive: &DriveSchedule,
    theta_time: f64,
    n: usize,
    report_times: &[f64],
) -> Result<Vec<(f64, Vec<f64>)>> {
    check_capacity(n)?;
    validate_p0(p0, 1 << (n - 1))?;
    if report_times.windows(2).any(|w| w[1] < w[0]) || report_times.iter().any(|&t| t < 0.0) {
        return Err(Error::Validation(
            "report times must be nonnegative and nondecreasing".into(),
        ));
    }
    drive.validate(report_times.last().copied().unwrap_or(0.0))?;
    let mut p = p0.to_vec();
    let mut out = Vec::with_capacity(report_times.len());
    let mut t = 0.0;
    for &tr in report_times {
        advance(&mut p, model, drive, theta_time, n, t, tr)?;
        t = tr;
        debug_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        debug_assert!(p.iter().all(|&v| v >= 0.0));
        out.push((tr, p.clone()));
    }
    Ok(out)
}

/// Stationary distribution of `L_N(t)` at the frozen time `t`: a direct
/// kernel solve for small state spaces, power iteration above that.
pub fn stationary_state(
    model: &RateModel,
    drive: &DriveSchedule,
    t: f64,
    n: usize,
) -> Result<Vec<f64>> {
    let gen = build_generator(model, drive, t, n)?;
    let states = gen.states;
    let pi = if states <= DENSE_STATIONARY_CAP {
        // Solve pi Q = 0 with the last balance equation replaced by the
        // normalization sum(pi) = 1.
        let mut a = gen.dense().transpose();
        for s in 0..states {
            a[(states - 1, s)] = 1.0;
        }
        let mut b = DVector::zeros(states);
        b[states - 1] = 1.0;
        let lu = a.lu();
        let x = lu
            .solve(&b)
            .ok_or_else(|| Error::Singular("stationary kernel solve failed".into()))?;
        x.iter().cloned().collect::<Vec<f64>>()
    } else {
        // Power iteration on the uniformized transition matrix.
        let lambda = gen.max_exit() * 1.05 + 1e-12;
        let mut p = vec![1.0 / states as f64; states];
        let mut q = vec![0.0; states];
        let mut converged = false;
        for _ in 0..5_000_000 {
            gen.apply_uniformized(lambda, &p, &mut q);
            let diff: f64 = p
                .iter()
                .zip(q.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut p, &mut q);
            if diff < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Singular(
                "stationary power iteration failed to converge".into(),
            ));
        }
        p
    };
    // Normalize and verify the kernel residual.
    let mass: f64 = pi.iter().sum();
    let pi: Vec<f64> = pi.iter().map(|v| v / mass).collect();
    if pi.iter().any(|&v| v < -1e-12) {
        return Err(Error::Singular("stationary vector has negative mass".into()));
    }
    let mut residual = 0.0f64;
    for s in 0..states {
        let mut acc = -pi[s] * gen.exit[s];
        for (row, &weight) in gen.rows.iter().zip(pi.iter()) {
            for &(tgt, r) in row {
                if tgt == s {
                    acc += weight * r;
                }
            }
        }
        residual = residual.max(acc.abs());
    }
    if residual > 1e-12 {
        return Err(Error::Singular(format!(
            "stationary residual {} exceeds 1e-12",
            residual
        )));
    }
    Ok(pi.iter().map(|v| v.max(0.0)).collect())
}

/// One row of an exact entropy trajectory.
#[derive(Debug, Clone, Copy)]
pub struct EntropyRow {
    pub t: f64,
    pub h: f64,
    pub h_normalized: f64,
}

/// Evolves `p0` and reports, at every requested time, the relative entropy
/// against the product measure with the local profile `rho(t, j)` supplied
/// by the caller, normalized by `N ε²`.
#[allow(clippy::too_many_arguments)]
pub fn entropy_trajectory(
    p0: &[f64],
    model: &RateModel,
    drive: &DriveSchedule,
    theta_time: f64,
    n: usize,
    times: &[f64],
    rho: impl Fn(f64, usize) -> f64,
    epsilon: f64,
) -> Result<Vec<EntropyRow>> {
    let traj = evolve_forward(p0, model, drive, theta_time, n, times)?;
    let mut rows = Vec::with_capacity(traj.len());
    for (t, p) in traj {
        let gamma: Vec<f64> = (1..n).map(|j| rho(t, j)).collect();
        let reference = ProductMeasure::new(gamma)?;
        let h = relative_entropy_general(&p, &reference)?;
        rows.push(EntropyRow {
            t,
            h,
            h_normalized: h / (n as f64 * epsilon * epsilon),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FieldFn, TimeFn};

    #[test]
    fn two_site_generator_matches_closed_form() {
        let model = RateModel::ssep();
        let (a0, a1) = (0.2, 0.7);
        let drive = DriveSchedule::constant(a0, a1);
        let gen = build_generator(&model, &drive, 0.0, 2).unwrap();
        let q = gen.dense();
        let birth = a0 + a1;
        let death = 2.0 - a0 - a1;
        assert!((q[(0, 1)] - birth).abs() < 1e-14);
        assert!((q[(0, 0)] + birth).abs() < 1e-14);
        assert!((q[(1, 0)] - death).abs() < 1e-14);
        assert!((q[(1, 1)] + death).abs() < 1e-14);
    }

    #[test]
    fn generator_rows_sum_to_zero_and_count_moves() {
        for model in [RateModel::ssep(), RateModel::two_body()] {
            let drive = DriveSchedule::constant(0.3, 0.6);
            let n = 6;
            let gen = build_generator(&model, &drive, 0.0, n).unwrap();
            let q = gen.dense();
            for s in 0..gen.states {
                let row_sum: f64 = (0..gen.states).map(|t| q[(s, t)]).sum();
                assert!(row_sum.abs() < 1e-12);
                let eta = Configuration::from_bits(n, s as u64);
                let active = (1..n - 1)
                    .filter(|&j| eta.get(j) != eta.get(j + 1))
                    .count();
                assert_eq!(gen.rows[s].len(), active + 2);
            }
        }
    }

    #[test]
    fn two_state_relaxation_closed_form() {
        // N = 2 with constant drive: p1(t) = p_inf + (p1(0)-p_inf) e^{-2 theta t}.
        let model = RateModel::ssep();
        let (a0, a1) = (0.25, 0.55);
        let drive = DriveSchedule::constant(a0, a1);
        let theta = 3.0;
        let p0 = vec![1.0, 0.0];
        let times = [0.05, 0.1, 0.3, 0.7];
        let traj = evolve_forward(&p0, &model, &drive, theta, 2, &times).unwrap();
        let p_inf = (a0 + a1) / 2.0;
        for (t, p) in traj {
            let expect = p_inf + (0.0 - p_inf) * (-2.0 * theta * t).exp();
            assert!((p[1] - expect).abs() < 1e-11, "t = {}: {} vs {}", t, p[1], expect);
        }
    }

    #[test]
    fn stationary_vector_is_fixed_point_of_evolution() {
        let model = RateModel::two_body();
        let drive = DriveSchedule::constant(0.2, 0.8);
        let n = 5;
        let pi = stationary_state(&model, &drive, 0.0, n).unwrap();
        let traj = evolve_forward(&pi, &model, &drive, 5.0, n, &[1.0]).unwrap();
        for (a, b) in pi.iter().zip(traj[0].1.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn equilibrium_stationary_state_is_bernoulli_product() {
        let theta = 0.45;
        for model in [RateModel::ssep(), RateModel::two_body()] {
            let drive = DriveSchedule::equilibrium(theta);
            let n = 6;
            let pi = stationary_state(&model, &drive, 0.0, n).unwrap();
            let bern = ProductMeasure::homogeneous(n, theta)
                .unwrap()
                .as_vector()
                .unwrap();
            for (a, b) in pi.iter().zip(bern.iter()) {
                assert!((a - b).abs() < 1e-12, "{}", model.name());
            }
        }
    }

    #[test]
    fn detailed_balance_at_equilibrium() {
        let theta = 0.3;
        for model in [RateModel::ssep(), RateModel::two_body()] {
            let drive = DriveSchedule::equilibrium(theta);
            let n = 6;
            let gen = build_generator(&model, &drive, 0.0, n).unwrap();
            let pi = ProductMeasure::homogeneous(n, theta)
                .unwrap()
                .as_vector()
                .unwrap();
            for s in 0..gen.states {
                for &(t, r) in &gen.rows[s] {
                    let reverse = gen.rows[t]
                        .iter()
                        .find(|&&(b, _)| b == s)
                        .map(|&(_, rr)| rr)
                        .unwrap();
                    assert!(
                        (pi[s] * r - pi[t] * reverse).abs() < 1e-12,
                        "{}: edge {} -> {}",
                        model.name(),
                        s,
                        t
                    );
                }
            }
        }
    }

    #[test]
    fn time_dependent_drive_conserves_mass() {
        let model = RateModel::two_body();
        let drive = DriveSchedule {
            alpha_left: TimeFn::Sine {
                base: 0.4,
                amp: 0.2,
                omega: 3.0,
                phase: 0.0,
            },
            alpha_right: TimeFn::Linear {
                base: 0.5,
                slope: 0.2,
            },
            field: FieldFn::Constant { value: 0.8 },
            epsilon: 1.0,
            ell: 1.0,
        };
        let n = 5;
        let states = 1 << (n - 1);
        let p0 = vec![1.0 / states as f64; states];
        let traj = evolve_forward(&p0, &model, &drive, 20.0, n, &[0.3, 0.6, 1.0]).unwrap();
        for (_, p) in traj {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn entropy_vanishes_at_equilibrium_start() {
        let theta = 0.4;
        let model = RateModel::ssep();
        let drive = DriveSchedule::equilibrium(theta);
        let n = 6;
        let p0 = ProductMeasure::homogeneous(n, theta)
            .unwrap()
            .as_vector()
            .unwrap();
        let rows = entropy_trajectory(
            &p0,
            &model,
            &drive,
            36.0,
            n,
            &[0.0, 0.5, 1.0],
            |_, _| theta,
            1.0,
        )
        .unwrap();
        for row in rows {
            assert!(row.h >= -1e-15);
            assert!(row.h < 1e-9, "t = {}: H = {}", row.t, row.h);
        }
    }

    #[test]
    fn entropy_decreases_toward_equilibrium() {
        let theta = 0.5;
        let model = RateModel::ssep();
        let drive = DriveSchedule::equilibrium(theta);
        let n = 6;
        let perturbed: Vec<f64> = (1..n).map(|j| 0.3 + 0.05 * j as f64).collect();
        let p0 = ProductMeasure::new(perturbed).unwrap().as_vector().unwrap();
        let times = [0.0, 0.1, 0.2, 0.4, 0.8];
        let rows = entropy_trajectory(&p0, &model, &drive, 10.0, n, &times, |_, _| theta, 1.0)
            .unwrap();
        for w in rows.windows(2) {
            assert!(w[1].h <= w[0].h + 1e-12);
        }
        assert!(rows.last().unwrap().h < rows[0].h * 0.5);
    }

    #[test]
    fn entropy_at_zero_matches_product_formula() {
        let model = RateModel::ssep();
        let drive = DriveSchedule::equilibrium(0.35);
        let n = 7;
        let gamma: Vec<f64> = (1..n).map(|j| 0.2 + 0.08 * j as f64).collect();
        let mu = ProductMeasure::new(gamma).unwrap();
        let p0 = mu.as_vector().unwrap();
        let rows = entropy_trajectory(&p0, &model, &drive, 1.0, n, &[0.0], |_, _| 0.35, 1.0)
            .unwrap();
        let theta_measure = ProductMeasure::homogeneous(n, 0.35).unwrap();
        let expect = crate::measures::relative_entropy_products(&mu, &theta_measure);
        assert!((rows[0].h - expect).abs() < 1e-12);
    }

    #[test]
    fn capacity_refusal_is_explicit() {
        let model = RateModel::ssep();
        let drive = DriveSchedule::constant(0.5, 0.5);
        let err = build_generator(&model, &drive, 0.0, 16).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)), "{}", err);
    }
}
