//! Event-driven simulation of the chain generated by `θ_time · L_N(t)`.
//!
//! Time-dependent rates are handled by exact thinning: every bond carries an
//! upper bound on its rate over a lookahead horizon of the drive, events are
//! proposed at the bound intensity and accepted with probability
//! true-rate/bound. Bounds come from guaranteed enclosures of the drive
//! (corner maxima of the multilinear reservoir substitution), so the
//! bound-exceeded branch is a hard failure, never a clamp.
//!
//! Bond bookkeeping uses a Fenwick tree: a move touches only the O(window)
//! bonds whose rates can change, and event selection is logarithmic in N.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::ProductMeasure;
use crate::model::{bond_move, bond_rate, Configuration, CylinderFunction, DriveSchedule, Move, RateModel};

/// Number of accepted events between full particle-count recounts in debug
/// builds.
const RECOUNT_INTERVAL: u64 = 1 << 16;

/// Proposals between Fenwick rebuilds (caps floating-point drift in the
/// partial sums).
const REBUILD_INTERVAL: u64 = 1 << 22;

// ---------------------------------------------------------------------------
// Fenwick tree over bond bounds
// ---------------------------------------------------------------------------

struct Fenwick {
    tree: Vec<f64>,
    len: usize,
}

impl Fenwick {
    fn new(len: usize) -> Self {
        Fenwick {
            tree: vec![0.0; len + 1],
            len,
        }
    }

    fn rebuild(&mut self, vals: &[f64]) {
        self.tree.iter_mut().for_each(|v| *v = 0.0);
        for (i, &v) in vals.iter().enumerate() {
            self.add(i, v);
        }
    }

    #[inline]
    fn add(&mut self, mut i: usize, delta: f64) {
        i += 1;
        while i <= self.len {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    #[inline]
    fn total(&self) -> f64 {
        self.prefix(self.len)
    }

    #[inline]
    fn prefix(&self, mut i: usize) -> f64 {
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    /// Largest index whose prefix sum is ≤ target (bond selection).
    #[inline]
    fn select(&self, mut target: f64) -> usize {
        let mut pos = 0usize;
        let mut step = self.len.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= self.len && self.tree[next] < target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        pos.min(self.len - 1)
    }
}

// ---------------------------------------------------------------------------
// Replica results and observables
// ---------------------------------------------------------------------------

/// One sample path: recorded configurations at the checkpoint times.
#[derive(Debug, Clone)]
pub struct ReplicaResult {
    pub seed: u64,
    /// Accepted moves.
    pub events: u64,
    /// Thinning proposals (≥ events).
    pub proposals: u64,
    pub records: Vec<(f64, Configuration)>,
}

/// Empirical density of particles in the `(2k+1)`-window around `j`,
/// intersected with the lattice; the divisor stays `2k+1` even when the
/// window is truncated at the boundary.
pub fn block_density(eta: &Configuration, j: usize, k: usize) -> f64 {
    let n = eta.n();
    assert!(j >= 1 && j < n);
    let lo = j.saturating_sub(k).max(1);
    let hi = (j + k).min(n - 1);
    let sum: u32 = (lo..=hi).map(|i| eta.get(i) as u32).sum();
    sum as f64 / (2 * k + 1) as f64
}

/// Observables evaluated on checkpoint states (never inside the hot loop).
#[derive(Debug, Clone)]
pub enum Observable {
    /// Raw occupation of every site: N-1 values.
    SiteOccupancy,
    /// Block density `η^k(j)` at every site: N-1 values.
    BlockDensity { k: usize },
    /// `(1/N) Σ_j w_j Ψ(τ^{N,λ(t)}_j η)` with reservoir substitution at the
    /// checkpoint time: a single value.
    CylinderAverage {
        psi: CylinderFunction,
        weights: Vec<f64>,
    },
}

impl Observable {
    pub fn dim(&self, n: usize) -> usize {
        match self {
            Observable::SiteOccupancy | Observable::BlockDensity { .. } => n - 1,
            Observable::CylinderAverage { .. } => 1,
        }
    }

    pub fn eval(&self, drive: &DriveSchedule, t: f64, eta: &Configuration, out: &mut Vec<f64>) {
        let n = eta.n();
        match self {
            Observable::SiteOccupancy => out.extend((1..n).map(|j| eta.get(j) as f64)),
            Observable::BlockDensity { k } => {
                out.extend((1..n).map(|j| block_density(eta, j, *k)))
            }
            Observable::CylinderAverage { psi, weights } => {
                assert_eq!(weights.len(), n - 1);
                let a0 = drive.alpha0(t);
                let a1 = drive.alpha1(t);
                let s: f64 = (1..n)
                    .map(|j| weights[j - 1] * psi.eval_extended(eta, j as i64, a0, a1))
                    .sum();
                out.push(s / n as f64);
            }
        }
    }
}

/// Per-checkpoint ensemble means and standard errors, concatenated over the
/// observables in declaration order.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub checkpoints: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub replicas: usize,
    pub base_seed: u64,
    pub total_events: u64,
}

#[derive(Debug, Clone)]
pub enum InitialCondition {
    Product(ProductMeasure),
    Fixed(Configuration),
}

// ---------------------------------------------------------------------------
// Single-replica run
// ---------------------------------------------------------------------------

struct BondState<'a> {
    model: &'a RateModel,
    drive: &'a DriveSchedule,
    n: usize,
    /// Offsets k such that a change of site i+k can alter the rate of bond i.
    affect_offsets: Vec<i64>,
    /// Global bound on the weak-asymmetry tilt factor over the whole run.
    tilt_max: f64,
    bounds: Vec<f64>,
    fenwick: Fenwick,
    /// Bonds whose bound depends on the drive (reservoir window overlap).
    time_dep: Vec<usize>,
    expiry: f64,
}

impl<'a> BondState<'a> {
    fn new(model: &'a RateModel, drive: &'a DriveSchedule, n: usize, t_end: f64) -> Self {
        let mut offs = model.rate_function().support();
        offs.extend([0, 1]);
        offs.sort_unstable();
        offs.dedup();
        let tilt_max = (drive.field.abs_bound(0.0, t_end) / (2.0 * n as f64)).exp();

        let drive_constant = drive.max_abs_deriv() == 0.0;
        let mut time_dep = Vec::new();
        if !drive_constant {
            for bond in 0..n {
                if bond == 0 || bond == n - 1 || Self::touches_reservoir(model, n, bond) {
                    time_dep.push(bond);
                }
            }
        }
        BondState {
            model,
            drive,
            n,
            affect_offsets: offs,
            tilt_max,
            bounds: vec![0.0; n],
            fenwick: Fenwick::new(n),
            time_dep,
            expiry: if drive_constant { f64::INFINITY } else { 0.0 },
        }
    }

    fn touches_reservoir(model: &RateModel, n: usize, bond: usize) -> bool {
        model
            .rate_function()
            .support()
            .iter()
            .any(|&k| bond as i64 + k <= 0 || bond as i64 + k >= n as i64)
    }

    /// Upper bound on the rate of `bond` for all times in `[t0, t1]`, for the
    /// current configuration. Exact when nothing in the window is
    /// time-dependent; a corner maximum of the multilinear reservoir
    /// substitution otherwise.
    fn bond_bound(&self, bond: usize, eta: &Configuration, t0: f64, t1: f64) -> f64 {
        let n = self.n;
        let is_exchange = bond >= 1 && bond <= n - 2;
        if is_exchange && eta.get(bond) == eta.get(bond + 1) {
            return 0.0; // exchange would not change the state
        }
        let (a0_lo, a0_hi) = self.drive.alpha_left.range(t0, t1);
        let (a1_lo, a1_hi) = self.drive.alpha_right.range(t0, t1);
        let c = self.model.rate_function();

        // Corner maximum of c over the off-lattice sites of this bond.
        let off_sites: Vec<i64> = c
            .support()
            .iter()
            .copied()
            .filter(|&k| bond as i64 + k <= 0 || bond as i64 + k >= n as i64)
            .collect();
        let mut c_max = f64::NEG_INFINITY;
        for corner in 0u32..(1 << off_sites.len()) {
            let v = c.eval_with(|k| {
                let i = bond as i64 + k;
                if i <= 0 || i >= n as i64 {
                    let idx = off_sites.iter().position(|&s| s == k).unwrap();
                    let hi = (corner >> idx) & 1 == 1;
                    if i <= 0 {
                        if hi {
                            a0_hi
                        } else {
                            a0_lo
                        }
                    } else if hi {
                        a1_hi
                    } else {
                        a1_lo
                    }
                } else {
                    eta.get(i as usize) as f64
                }
            });
            c_max = c_max.max(v);
        }

        let r_max = if bond == 0 {
            let e1 = eta.get(1) as f64;
            (a0_lo * (1.0 - e1) + e1 * (1.0 - a0_lo))
                .max(a0_hi * (1.0 - e1) + e1 * (1.0 - a0_hi))
        } else if bond == n - 1 {
            let en = eta.get(n - 1) as f64;
            (a1_lo * (1.0 - en) + en * (1.0 - a1_lo))
                .max(a1_hi * (1.0 - en) + en * (1.0 - a1_hi))
        } else {
            1.0
        };
        r_max * c_max * self.tilt_max
    }

    fn set_bound(&mut self, bond: usize, value: f64) {
        let delta = value - self.bounds[bond];
        if delta != 0.0 {
            self.bounds[bond] = value;
            self.fenwick.add(bond, delta);
        }
    }

    fn recompute_all(&mut self, eta: &Configuration, t0: f64, t1: f64) {
        for bond in 0..self.n {
            self.bounds[bond] = self.bond_bound(bond, eta, t0, t1);
        }
        self.fenwick.rebuild(&self.bounds);
    }

    /// On horizon expiry only the drive-dependent bounds can change.
    fn refresh_time_dep(&mut self, eta: &Configuration, t0: f64, t1: f64) {
        for idx in 0..self.time_dep.len() {
            let bond = self.time_dep[idx];
            let v = self.bond_bound(bond, eta, t0, t1);
            self.set_bound(bond, v);
        }
    }

    /// Recompute the bounds that can have changed after a move at `mv`.
    fn update_after_move(&mut self, mv: Move, eta: &Configuration, t0: f64, t1: f64) {
        let n = self.n;
        let sites: [i64; 2] = match mv {
            Move::Exchange(j) => [j as i64, j as i64 + 1],
            Move::FlipLeft => [1, 1],
            Move::FlipRight => [(n - 1) as i64, (n - 1) as i64],
        };
        let mut touched = [usize::MAX; 16];
        let mut count = 0usize;
        for &s in &sites {
            for &k in &self.affect_offsets {
                let b = s - k;
                if b >= 0 && b < n as i64 {
                    let b = b as usize;
                    if !touched[..count].contains(&b) {
                        touched[count] = b;
                        count += 1;
                    }
                }
            }
        }
        for &b in &touched[..count] {
            let v = self.bond_bound(b, eta, t0, t1);
            self.set_bound(b, v);
        }
    }
}

/// Statistically exact sample path of the inhomogeneous chain on `[0, T]`
/// with `T` the last checkpoint; the state is recorded at every checkpoint.
pub fn run(
    model: &RateModel,
    drive: &DriveSchedule,
    theta_time: f64,
    initial: Configuration,
    checkpoints: &[f64],
    seed: u64,
) -> Result<ReplicaResult> {
    if theta_time <= 0.0 {
        return Err(Error::Validation("theta_time must be positive".into()));
    }
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation(
            "checkpoints must be strictly increasing".into(),
        ));
    }
    if checkpoints.iter().any(|&c| c < 0.0) {
        return Err(Error::Validation("checkpoints must be nonnegative".into()));
    }
    let n = initial.n();
    let t_end = checkpoints.last().copied().unwrap_or(0.0);
    drive.validate(t_end)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eta = initial;
    let mut records: Vec<(f64, Configuration)> = Vec::with_capacity(checkpoints.len().max(1));
    if checkpoints.is_empty() {
        records.push((0.0, eta));
        return Ok(ReplicaResult {
            seed,
            events: 0,
            proposals: 0,
            records,
        });
    }

    let mut bonds = BondState::new(model, drive, n, t_end);
    let mut t = 0.0f64;
    // Bootstrap horizon; adapted from the mean waiting time afterwards.
    let h0 = if bonds.expiry.is_infinite() {
        f64::INFINITY
    } else {
        (t_end / 1024.0).max(1e-12)
    };
    bonds.recompute_all(&eta, t, t + h0);
    bonds.expiry = t + h0;

    let mut next_cp = 0usize;
    let mut events = 0u64;
    let mut proposals = 0u64;
    let mut particles = eta.particles() as i64;

    loop {
        let total = bonds.fenwick.total();
        debug_assert!(total > 0.0, "flip bounds keep the total positive");

        let wait = -(1.0 - rng.gen::<f64>()).ln() / (theta_time * total);
        let t_next = t + wait;

        if t_next > bonds.expiry {
            // No event before the bound horizon: advance and refresh.
            t = bonds.expiry;
            if t >= t_end {
                while next_cp < checkpoints.len() {
                    records.push((checkpoints[next_cp], eta.clone()));
                    next_cp += 1;
                }
                break;
            }
            let h = (10.0 / (theta_time * total)).max(1e-12);
            let expiry = t + h;
            bonds.refresh_time_dep(&eta, t, expiry);
            bonds.expiry = expiry;
            continue;
        }

        // Record every checkpoint passed before this proposal fires.
        while next_cp < checkpoints.len() && checkpoints[next_cp] <= t_next {
            records.push((checkpoints[next_cp], eta.clone()));
            next_cp += 1;
        }
        if t_next >= t_end {
            break;
        }
        t = t_next;
        proposals += 1;

        let bond = bonds.fenwick.select(rng.gen::<f64>() * total);
        let bound = bonds.bounds[bond];
        if bound <= 0.0 {
            continue; // partial-sum dust selected an inactive bond
        }
        let rate = bond_rate(model, drive, t, bond, &eta);
        if rate > bound * (1.0 + 1e-12) {
            return Err(Error::RateBoundExceeded {
                bond,
                t,
                rate,
                bound,
            });
        }
        if rate < bound && rng.gen::<f64>() * bound >= rate {
            continue; // thinning rejection
        }

        let mv = bond_move(bond, n);
        if let Move::Exchange(j) = mv {
            debug_assert_ne!(eta.get(j), eta.get(j + 1), "inactive exchange selected");
        } else {
            let site = if mv == Move::FlipLeft { 1 } else { n - 1 };
            particles += if eta.get(site) == 1 { -1 } else { 1 };
        }
        eta.apply_move(mv);
        events += 1;
        bonds.update_after_move(mv, &eta, t, bonds.expiry);

        if events.is_multiple_of(RECOUNT_INTERVAL) {
            debug_assert_eq!(particles, eta.particles() as i64, "particle bookkeeping drift");
        }
        if proposals.is_multiple_of(REBUILD_INTERVAL) {
            bonds.fenwick.rebuild(&bonds.bounds);
        }
    }
    debug_assert_eq!(particles, eta.particles() as i64);

    Ok(ReplicaResult {
        seed,
        events,
        proposals,
        records,
    })
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derived seed for replica `r` of an ensemble.
pub fn replica_seed(base_seed: u64, r: usize) -> u64 {
    splitmix64(base_seed.wrapping_add((r as u64).wrapping_mul(0x9E3779B97F4A7C15)))
}

/// Runs `replicas` independent paths in parallel and aggregates the
/// observables at every checkpoint. Aggregation order is by replica index,
/// so the result is bit-identical for a fixed `base_seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    model: &RateModel,
    drive: &DriveSchedule,
    n: usize,
    theta_time: f64,
    init: &InitialCondition,
    checkpoints: &[f64],
    observables: &[Observable],
    replicas: usize,
    base_seed: u64,
) -> Result<EnsembleResult> {
    if replicas < 1 {
        return Err(Error::Validation("need at least one replica".into()));
    }
    let dim: usize = observables.iter().map(|o| o.dim(n)).sum();

    let paths: Vec<Result<(Vec<Vec<f64>>, u64)>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let seed = replica_seed(base_seed, r);
            let initial = match init {
                InitialCondition::Fixed(c) => {
                    assert_eq!(c.n(), n);
                    c.clone()
                }
                InitialCondition::Product(mu) => {
                    assert_eq!(mu.n(), n);
                    // Initial-state draw and path share the replica stream.
                    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
                    mu.sample(&mut rng)
                }
            };
            let res = run(model, drive, theta_time, initial, checkpoints, seed)?;
            let mut per_cp = Vec::with_capacity(res.records.len());
            for (t, eta) in &res.records {
                let mut row = Vec::with_capacity(dim);
                for obs in observables {
                    obs.eval(drive, *t, eta, &mut row);
                }
                per_cp.push(row);
            }
            Ok((per_cp, res.events))
        })
        .collect();

    let n_cp = checkpoints.len().max(1);
    let mut sum = vec![vec![0.0; dim]; n_cp];
    let mut sumsq = vec![vec![0.0; dim]; n_cp];
    let mut total_events = 0u64;
    for path in paths {
        let (per_cp, events) = path?;
        total_events += events;
        for (cp, row) in per_cp.iter().enumerate() {
            for (d, &v) in row.iter().enumerate() {
                sum[cp][d] += v;
                sumsq[cp][d] += v * v;
            }
        }
    }
    let r = replicas as f64;
    let mut mean = vec![vec![0.0; dim]; n_cp];
    let mut stderr = vec![vec![0.0; dim]; n_cp];
    for cp in 0..n_cp {
        for d in 0..dim {
            let m = sum[cp][d] / r;
            mean[cp][d] = m;
            if replicas >= 2 {
                let var = ((sumsq[cp][d] - r * m * m) / (r - 1.0)).max(0.0);
                stderr[cp][d] = (var / r).sqrt();
            }
        }
    }
    Ok(EnsembleResult {
        checkpoints: checkpoints.to_vec(),
        mean,
        stderr,
        replicas,
        base_seed,
        total_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriveSchedule, FieldFn, TimeFn};

    #[test]
    fn block_density_examples() {
        let mut eta = Configuration::empty(20);
        eta.set(4, 1);
        eta.set(6, 1);
        assert!((block_density(&eta, 5, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(block_density(&eta, 5, 0), 0.0);
        assert_eq!(block_density(&eta, 4, 0), 1.0);

        // Truncated window keeps the 2k+1 divisor.
        let mut full = Configuration::empty(20);
        for j in 1..20 {
            full.set(j, 1);
        }
        assert!((block_density(&full, 1, 2) - 3.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn zero_checkpoints_returns_initial_only() {
        let model = RateModel::ssep();
        let drive = DriveSchedule::constant(0.2, 0.8);
        let eta = Configuration::from_bits(6, 0b10101);
        let res = run(&model, &drive, 10.0, eta.clone(), &[], 1).unwrap();
        assert_eq!(res.events, 0);
        assert_eq!(res.records.len(), 1);
        assert_eq!(res.records[0].1, eta);
    }

    #[test]
    fn two_state_long_run_occupation() {
        // N = 2: birth rate α0 + α1 = 1, death rate 2 - α0 - α1 = 1.
        let model = RateModel::ssep();
        let drive = DriveSchedule::constant(0.2, 0.8);
        let checkpoints: Vec<f64> = (1..=4000).map(|i| i as f64).collect();
        let res = run(&model, &drive, 1.0, Configuration::empty(2), &checkpoints, 42).unwrap();
        let mean: f64 = res
            .records
            .iter()
            .map(|(_, eta)| eta.get(1) as f64)
            .sum::<f64>()
            / res.records.len() as f64;
        // Samples 1 apart are nearly independent (relaxation time 0.5);
        // 4σ band for 4000 Bernoulli(0.5) draws.
        assert!((mean - 0.5).abs() < 4.0 * 0.5 / (4000f64).sqrt(), "mean {}", mean);
    }

    #[test]
    fn equilibrium_product_measure_is_stationary() {
        let theta = 0.35;
        let model = RateModel::two_body();
        let drive = DriveSchedule::equilibrium(theta);
        let n = 40;
        let mu = ProductMeasure::homogeneous(n, theta).unwrap();
        let checkpoints = [2.0, 4.0, 6.0];
        let res = run_ensemble(
            &model,
            &drive,
            n,
            (n * n) as f64,
            &InitialCondition::Product(mu),
            &checkpoints,
            &[Observable::SiteOccupancy],
            400,
            9,
        )
        .unwrap();
        for cp in 0..checkpoints.len() {
            let mean: f64 = res.mean[cp].iter().sum::<f64>() / (n - 1) as f64;
            // Per-site 4σ would be loose; average over sites and checkpoints.
            assert!((mean - theta).abs() < 0.01, "cp {}: mean {}", cp, mean);
        }
    }

    #[test]
    fn ensembles_are_reproducible() {
        let model = RateModel::ssep();
        let drive = DriveSchedule {
            alpha_left: TimeFn::Linear {
                base: 0.3,
                slope: 0.1,
            },
            alpha_right: TimeFn::constant(0.6),
            field: FieldFn::Zero,
            epsilon: 1.0,
            ell: 1.0,
        };
        let mu = ProductMeasure::homogeneous(10, 0.5).unwrap();
        let go = || {
            run_ensemble(
                &model,
                &drive,
                10,
                50.0,
                &InitialCondition::Product(mu.clone()),
                &[0.5, 1.0],
                &[Observable::SiteOccupancy],
                64,
                1234,
            )
            .unwrap()
        };
        let a = go();
        let b = go();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.stderr, b.stderr);
        assert_eq!(a.total_events, b.total_events);
    }

    #[test]
    fn deterministic_observable_has_zero_stderr() {
        let model = RateModel::ssep();
        let drive = DriveSchedule::constant(0.4, 0.4);
        let eta = Configuration::from_bits(8, 0b1010101);
        // t_end = 0: every replica reports the (identical) initial state.
        let res = run_ensemble(
            &model,
            &drive,
            8,
            1.0,
            &InitialCondition::Fixed(eta),
            &[0.0],
            &[Observable::BlockDensity { k: 1 }],
            16,
            5,
        )
        .unwrap();
        // Cancellation in the variance leaves O(eps) dust, nothing more.
        assert!(res.stderr[0].iter().all(|&s| s < 1e-7), "{:?}", res.stderr[0]);
    }

    #[test]
    fn adversarially_fast_drive_never_breaks_the_bound() {
        let model = RateModel::two_body();
        let drive = DriveSchedule {
            alpha_left: TimeFn::Sine {
                base: 0.5,
                amp: 0.45,
                omega: 500.0,
                phase: 0.0,
            },
            alpha_right: TimeFn::Sine {
                base: 0.5,
                amp: 0.45,
                omega: 377.0,
                phase: 1.0,
            },
            field: FieldFn::Uniform {
                time: TimeFn::Sine {
                    base: 0.0,
                    amp: 3.0,
                    omega: 200.0,
                    phase: 0.0,
                },
            },
            epsilon: 1.0,
            ell: 1.0,
        };
        let mu = ProductMeasure::homogeneous(12, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let initial = mu.sample(&mut rng);
        let res = run(&model, &drive, 144.0, initial, &[0.25, 0.5, 1.0], 77).unwrap();
        assert!(res.events > 0);
        assert_eq!(res.records.len(), 3);
    }

    #[test]
    fn rejects_unsorted_checkpoints() {
        let model = RateModel::ssep();
        let drive = DriveSchedule::constant(0.5, 0.5);
        let eta = Configuration::empty(4);
        assert!(run(&model, &drive, 1.0, eta, &[1.0, 0.5], 0).is_err());
    }
}
