//! Lattice configurations, cylinder functions, gradient jump rates and the
//! elementary moves of the boundary-driven dynamics.
//!
//! Sites live on `{1, …, N-1}`. A jump rate is a strictly positive cylinder
//! function `c` that does not depend on the occupations at offsets 0 and 1,
//! together with a gradient decomposition of the instantaneous current
//! `[η(0) - η(1)] c(η)` into discrete gradients of local functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact-enumeration tolerance for identities checked in floating point.
pub const GRADIENT_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Configurations
// ---------------------------------------------------------------------------

/// Occupancy state over `Λ_N = {1, …, N-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    n: usize,
    occ: Vec<u8>,
}

/// An elementary move of the generator: a nearest-neighbour exchange on an
/// interior bond, or a creation/annihilation flip at either boundary site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    /// Swap `η(j)` and `η(j+1)`, `1 ≤ j ≤ N-2`.
    Exchange(usize),
    /// Toggle `η(1)`.
    FlipLeft,
    /// Toggle `η(N-1)`.
    FlipRight,
}

impl Configuration {
    pub fn empty(n: usize) -> Self {
        assert!(n >= 2, "lattice needs N >= 2");
        Configuration {
            n,
            occ: vec![0; n - 1],
        }
    }

    /// Build from an integer key: bit `j-1` is the occupation of site `j`.
    pub fn from_bits(n: usize, key: u64) -> Self {
        let mut c = Configuration::empty(n);
        for j in 1..n {
            c.occ[j - 1] = ((key >> (j - 1)) & 1) as u8;
        }
        c
    }

    pub fn to_bits(&self) -> u64 {
        assert!(self.n - 1 <= 64);
        let mut key = 0u64;
        for j in 1..self.n {
            key |= (self.occ[j - 1] as u64) << (j - 1);
        }
        key
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize) -> u8 {
        debug_assert!(j >= 1 && j < self.n, "site {} outside lattice", j);
        self.occ[j - 1]
    }

    #[inline]
    pub fn set(&mut self, j: usize, v: u8) {
        debug_assert!(v <= 1);
        debug_assert!(j >= 1 && j < self.n);
        self.occ[j - 1] = v;
    }

    pub fn particles(&self) -> usize {
        self.occ.iter().map(|&v| v as usize).sum()
    }

    pub fn occupations(&self) -> &[u8] {
        &self.occ
    }

    pub fn apply_move(&mut self, mv: Move) {
        match mv {
            Move::Exchange(j) => {
                debug_assert!(j >= 1 && j <= self.n - 2, "exchange bond {} out of range", j);
                self.occ.swap(j - 1, j);
            }
            Move::FlipLeft => self.occ[0] ^= 1,
            Move::FlipRight => self.occ[self.n - 2] ^= 1,
        }
    }
}

// ---------------------------------------------------------------------------
// Cylinder functions
// ---------------------------------------------------------------------------

/// Finite multilinear functional of the occupation variables, stored in the
/// subset-coefficient expansion `f(η) = c_∅ + Σ_A c_A Π_{k∈A} η(k)`.
///
/// Because the expansion is multilinear, evaluation extends verbatim to
/// fractional occupancies in `[0,1]`, which is exactly what the reservoir
/// substitution of [`CylinderFunction::eval_extended`] needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFunction {
    constant: f64,
    /// Sorted, duplicate-free offset sets with their coefficients.
    terms: Vec<(Vec<i64>, f64)>,
}

impl CylinderFunction {
    pub fn constant(v: f64) -> Self {
        CylinderFunction {
            constant: v,
            terms: Vec::new(),
        }
    }

    /// The single occupation variable `η(k)`.
    pub fn occupation(k: i64) -> Self {
        CylinderFunction::constant(0.0).term(&[k], 1.0)
    }

    /// Add `coeff · Π_{k∈offsets} η(k)`. Repeated offsets collapse (η² = η);
    /// an empty offset list adds to the constant.
    pub fn term(mut self, offsets: &[i64], coeff: f64) -> Self {
        let mut a: Vec<i64> = offsets.to_vec();
        a.sort_unstable();
        a.dedup();
        if a.is_empty() {
            self.constant += coeff;
            return self;
        }
        if let Some(t) = self.terms.iter_mut().find(|(set, _)| *set == a) {
            t.1 += coeff;
        } else {
            self.terms.push((a, coeff));
        }
        self
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> &[(Vec<i64>, f64)] {
        &self.terms
    }

    /// All offsets the function depends on, sorted.
    pub fn support(&self) -> Vec<i64> {
        let mut s: Vec<i64> = self.terms.iter().flat_map(|(a, _)| a.iter().copied()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn depends_on(&self, k: i64) -> bool {
        self.terms.iter().any(|(a, _)| a.contains(&k))
    }

    /// Shift every offset by `shift`: the result reads site `i + shift`
    /// where `self` read site `i`.
    pub fn translate(&self, shift: i64) -> Self {
        CylinderFunction {
            constant: self.constant,
            terms: self
                .terms
                .iter()
                .map(|(a, c)| (a.iter().map(|k| k + shift).collect(), *c))
                .collect(),
        }
    }

    /// `self + scale · other`.
    pub fn scaled_add(&self, other: &CylinderFunction, scale: f64) -> Self {
        let mut out = self.clone();
        out.constant += scale * other.constant;
        for (a, c) in &other.terms {
            out = out.term(a, scale * c);
        }
        out
    }

    /// Multilinear evaluation against an arbitrary site valuation.
    #[inline]
    pub fn eval_with<F: Fn(i64) -> f64>(&self, x: F) -> f64 {
        let mut v = self.constant;
        for (a, c) in &self.terms {
            let mut p = *c;
            for &k in a {
                p *= x(k);
                if p == 0.0 {
                    break;
                }
            }
            v += p;
        }
        v
    }

    /// `f(τ^{N,λ}_j η)`: offsets are taken relative to `j`, sites `≤ 0` read
    /// the left reservoir density and sites `≥ N` the right one.
    pub fn eval_extended(&self, eta: &Configuration, j: i64, alpha0: f64, alpha1: f64) -> f64 {
        let n = eta.n() as i64;
        self.eval_with(|k| {
            let i = j + k;
            if i <= 0 {
                alpha0
            } else if i >= n {
                alpha1
            } else {
                eta.get(i as usize) as f64
            }
        })
    }

    /// `Ψ̂(θ) = E_{ν_θ}[Ψ] = c_∅ + Σ_A c_A θ^{|A|}`.
    pub fn hat(&self, theta: f64) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|(a, c)| c * theta.powi(a.len() as i32))
                .sum::<f64>()
    }

    /// Exact θ-derivative of the hat polynomial.
    pub fn hat_prime(&self, theta: f64) -> f64 {
        self.terms
            .iter()
            .map(|(a, c)| c * a.len() as f64 * theta.powi(a.len() as i32 - 1))
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Gradient decomposition and rate models
// ---------------------------------------------------------------------------

/// One pair `(μ_a, h_a)` of the gradient decomposition: a finite signed
/// measure on ℤ with vanishing total mass, and a cylinder function.
#[derive(Debug, Clone)]
pub struct GradientPart {
    pub measure: Vec<(i64, f64)>,
    pub h: CylinderFunction,
}

impl GradientPart {
    /// First moment `m_a = Σ_k k μ_a(k)`.
    pub fn first_moment(&self) -> f64 {
        self.measure.iter().map(|(k, w)| *k as f64 * w).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.measure.iter().map(|(_, w)| w).sum()
    }
}

/// Gradient decomposition `[η(0) - η(1)] c(η) = Σ_a Σ_j μ_a(j) (τ_{-j} h_a)(η)`.
#[derive(Debug, Clone)]
pub struct GradientDecomposition {
    pub parts: Vec<GradientPart>,
}

impl GradientDecomposition {
    /// The cylinder function `h = Σ_a m_a h_a` entering the covariance
    /// formula for the diffusivity.
    pub fn h_function(&self) -> CylinderFunction {
        let mut h = CylinderFunction::constant(0.0);
        for p in &self.parts {
            h = h.scaled_add(&p.h, p.first_moment());
        }
        h
    }
}

/// Exchange rate plus its gradient decomposition.
#[derive(Debug, Clone)]
pub struct RateModel {
    c: CylinderFunction,
    grad: GradientDecomposition,
    name: String,
}

impl RateModel {
    /// Validates positivity of `c` over its window, independence from the
    /// offsets 0 and 1, and zero total mass of every `μ_a`.
    pub fn new(name: &str, c: CylinderFunction, grad: GradientDecomposition) -> Result<Self> {
        if c.depends_on(0) || c.depends_on(1) {
            return Err(Error::Validation(format!(
                "rate '{}' depends on the offsets 0 or 1",
                name
            )));
        }
        let support = c.support();
        if support.len() > 20 {
            return Err(Error::Validation(format!(
                "rate '{}' has window size {} > 20",
                name,
                support.len()
            )));
        }
        for key in 0u64..(1u64 << support.len()) {
            let v = c.eval_with(|k| {
                let idx = support.iter().position(|&s| s == k).unwrap();
                ((key >> idx) & 1) as f64
            });
            if v <= 0.0 {
                return Err(Error::Validation(format!(
                    "rate '{}' is not strictly positive (value {} on window state {:#x})",
                    name, v, key
                )));
            }
        }
        for (a, p) in grad.parts.iter().enumerate() {
            if p.total_mass().abs() > GRADIENT_TOL {
                return Err(Error::Validation(format!(
                    "measure μ_{} of '{}' has nonzero total mass {}",
                    a + 1,
                    name,
                    p.total_mass()
                )));
            }
        }
        Ok(RateModel {
            c,
            grad,
            name: name.to_string(),
        })
    }

    /// SSEP: `c ≡ 1`, decomposed with `h_1 = η(0)`, `μ_1(0) = 1 = -μ_1(-1)`.
    pub fn ssep() -> Self {
        RateModel::new(
            "ssep",
            CylinderFunction::constant(1.0),
            GradientDecomposition {
                parts: vec![GradientPart {
                    measure: vec![(0, 1.0), (-1, -1.0)],
                    h: CylinderFunction::occupation(0),
                }],
            },
        )
        .expect("ssep preset is valid")
    }

    /// `c(η) = 1 + η(-1) + η(2)` with the three-part decomposition
    /// `h_1 = η(-1)η(0)`, `h_2 = η(0)η(2)`, `h_3 = η(0)`,
    /// `μ_1(0) = 1 = -μ_1(-2)`, `μ_2(0) = 1 = -μ_2(1)`, `μ_3(0) = 1 = -μ_3(-1)`.
    pub fn two_body() -> Self {
        let c = CylinderFunction::constant(1.0)
            .term(&[-1], 1.0)
            .term(&[2], 1.0);
        let grad = GradientDecomposition {
            parts: vec![
                GradientPart {
                    measure: vec![(0, 1.0), (-2, -1.0)],
                    h: CylinderFunction::constant(0.0).term(&[-1, 0], 1.0),
                },
                GradientPart {
                    measure: vec![(0, 1.0), (1, -1.0)],
                    h: CylinderFunction::constant(0.0).term(&[0, 2], 1.0),
                },
                GradientPart {
                    measure: vec![(0, 1.0), (-1, -1.0)],
                    h: CylinderFunction::occupation(0),
                },
            ],
        };
        RateModel::new("two-body", c, grad).expect("two-body preset is valid")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "ssep" => Ok(RateModel::ssep()),
            "two-body" => Ok(RateModel::two_body()),
            other => Err(Error::Validation(format!(
                "unknown model preset '{}' (expected 'ssep' or 'two-body')",
                other
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rate_function(&self) -> &CylinderFunction {
        &self.c
    }

    pub fn decomposition(&self) -> &GradientDecomposition {
        &self.grad
    }

    /// Half-width of the window the rate reads around a bond; moves within
    /// this distance of a bond can change its rate.
    pub fn window_radius(&self) -> i64 {
        self.c
            .support()
            .iter()
            .map(|k| k.abs())
            .max()
            .unwrap_or(1)
            .max(1)
    }

    /// Largest residual of the gradient identity over all configurations of
    /// the combined window (full-lattice translations, no reservoirs).
    pub fn gradient_residual(&self) -> f64 {
        // RHS term a, j: μ_a(j) · h_a read at sites (i - j) for i in supp h_a.
        let mut shifted: Vec<(f64, CylinderFunction)> = Vec::new();
        for p in &self.grad.parts {
            for &(j, w) in &p.measure {
                shifted.push((w, p.h.translate(-j)));
            }
        }
        let mut window: Vec<i64> = vec![0, 1];
        window.extend(self.c.support());
        for (_, f) in &shifted {
            window.extend(f.support());
        }
        window.sort_unstable();
        window.dedup();
        assert!(window.len() <= 24, "gradient window too large to enumerate");

        let mut worst = 0.0f64;
        for key in 0u64..(1u64 << window.len()) {
            let x = |k: i64| -> f64 {
                let idx = window.iter().position(|&s| s == k).unwrap();
                ((key >> idx) & 1) as f64
            };
            let lhs = (x(0) - x(1)) * self.c.eval_with(x);
            let rhs: f64 = shifted.iter().map(|(w, f)| w * f.eval_with(x)).sum();
            worst = worst.max((lhs - rhs).abs());
        }
        worst
    }

    /// True iff the gradient identity holds exactly on the combined window.
    pub fn verify_gradient(&self) -> bool {
        self.gradient_residual() <= GRADIENT_TOL
    }

    /// Exchange rate `c^{N,λ,E}_{j,j+1}(η)` for an interior bond `1 ≤ j ≤ N-2`.
    #[inline]
    pub fn bulk_rate(&self, drive: &DriveSchedule, t: f64, j: usize, eta: &Configuration) -> f64 {
        let n = eta.n();
        assert!(j >= 1 && j <= n - 2, "bulk bond {} out of range", j);
        let a0 = drive.alpha0(t);
        let a1 = drive.alpha1(t);
        let base = self.c.eval_extended(eta, j as i64, a0, a1);
        let e = drive.field.eval(t, j as f64 / n as f64);
        if e == 0.0 {
            base
        } else {
            let tilt = e / (2.0 * n as f64) * (eta.get(j) as f64 - eta.get(j + 1) as f64);
            tilt.exp() * base
        }
    }

    /// Reservoir flip rate at either boundary.
    #[inline]
    pub fn boundary_rate(
        &self,
        drive: &DriveSchedule,
        t: f64,
        side: Side,
        eta: &Configuration,
    ) -> f64 {
        let n = eta.n();
        match side {
            Side::Left => {
                let a0 = drive.alpha0(t);
                let eta1 = eta.get(1) as f64;
                let r = a0 * (1.0 - eta1) + eta1 * (1.0 - a0);
                let base = self.c.eval_extended(eta, 0, a0, drive.alpha1(t));
                let e = drive.field.eval(t, 0.0);
                if e == 0.0 {
                    r * base
                } else {
                    r * (e / (2.0 * n as f64) * (1.0 - 2.0 * eta1)).exp() * base
                }
            }
            Side::Right => {
                let a1 = drive.alpha1(t);
                let etan = eta.get(n - 1) as f64;
                let r = a1 * (1.0 - etan) + etan * (1.0 - a1);
                let base = self.c.eval_extended(eta, (n - 1) as i64, drive.alpha0(t), a1);
                let e = drive.field.eval(t, 1.0);
                if e == 0.0 {
                    r * base
                } else {
                    r * (-e / (2.0 * n as f64) * (1.0 - 2.0 * etan)).exp() * base
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Bond indexing shared by the sampler and the exact layer: bond `0` is the
/// left flip, bonds `1..=N-2` the exchanges, bond `N-1` the right flip.
pub fn bond_move(bond: usize, n: usize) -> Move {
    if bond == 0 {
        Move::FlipLeft
    } else if bond == n - 1 {
        Move::FlipRight
    } else {
        Move::Exchange(bond)
    }
}

/// Rate of `bond` at time `t` (the exchange formula value, whether or not the
/// exchange would change the state).
pub fn bond_rate(
    model: &RateModel,
    drive: &DriveSchedule,
    t: f64,
    bond: usize,
    eta: &Configuration,
) -> f64 {
    let n = eta.n();
    if bond == 0 {
        model.boundary_rate(drive, t, Side::Left, eta)
    } else if bond == n - 1 {
        model.boundary_rate(drive, t, Side::Right, eta)
    } else {
        model.bulk_rate(drive, t, bond, eta)
    }
}

// ---------------------------------------------------------------------------
// Drive schedules
// ---------------------------------------------------------------------------

/// Scalar function of macroscopic time, in one of a few closed forms so that
/// exact ranges and derivative bounds are available to the thinning sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeFn {
    Constant { value: f64 },
    /// `base + slope · t`
    Linear { base: f64, slope: f64 },
    /// `base + amp · sin(omega · t + phase)`
    Sine {
        base: f64,
        amp: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl TimeFn {
    pub fn constant(value: f64) -> Self {
        TimeFn::Constant { value }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeFn::Constant { value } => value,
            TimeFn::Linear { base, slope } => base + slope * t,
            TimeFn::Sine {
                base,
                amp,
                omega,
                phase,
            } => base + amp * (omega * t + phase).sin(),
        }
    }

    #[inline]
    pub fn deriv(&self, t: f64) -> f64 {
        match *self {
            TimeFn::Constant { .. } => 0.0,
            TimeFn::Linear { slope, .. } => slope,
            TimeFn::Sine {
                amp, omega, phase, ..
            } => amp * omega * (omega * t + phase).cos(),
        }
    }

    /// Guaranteed enclosure of the range over `[t0, t1]` (conservative for
    /// the sine form).
    pub fn range(&self, t0: f64, t1: f64) -> (f64, f64) {
        match *self {
            TimeFn::Constant { value } => (value, value),
            TimeFn::Linear { .. } => {
                let (a, b) = (self.eval(t0), self.eval(t1));
                (a.min(b), a.max(b))
            }
            TimeFn::Sine { base, amp, .. } => (base - amp.abs(), base + amp.abs()),
        }
    }

    pub fn max_abs_deriv(&self) -> f64 {
        match *self {
            TimeFn::Constant { .. } => 0.0,
            TimeFn::Linear { slope, .. } => slope.abs(),
            TimeFn::Sine { amp, omega, .. } => (amp * omega).abs(),
        }
    }
}

/// External field `E(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldFn {
    Zero,
    Constant { value: f64 },
    /// Space-independent, time-varying field.
    Uniform { time: TimeFn },
}

impl FieldFn {
    pub fn zero() -> Self {
        FieldFn::Zero
    }

    #[inline]
    pub fn eval(&self, t: f64, _x: f64) -> f64 {
        match *self {
            FieldFn::Zero => 0.0,
            FieldFn::Constant { value } => value,
            FieldFn::Uniform { time } => time.eval(t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, FieldFn::Zero) || matches!(self, FieldFn::Constant { value } if *value == 0.0)
    }

    /// Bound on `|E|` over `[t0, t1] × [0,1]`.
    pub fn abs_bound(&self, t0: f64, t1: f64) -> f64 {
        match *self {
            FieldFn::Zero => 0.0,
            FieldFn::Constant { value } => value.abs(),
            FieldFn::Uniform { time } => {
                let (lo, hi) = time.range(t0, t1);
                lo.abs().max(hi.abs())
            }
        }
    }

    pub fn max_abs_deriv_t(&self) -> f64 {
        match *self {
            FieldFn::Zero | FieldFn::Constant { .. } => 0.0,
            FieldFn::Uniform { time } => time.max_abs_deriv(),
        }
    }
}

/// Time-dependent chemical potentials (through their boundary densities),
/// external field, and the scale parameters `ε_N` and `ℓ_N`.
///
/// Boundary data is stored as the densities `α_a(t) = e^{λ_a}/(1+e^{λ_a})`;
/// the chemical potentials are recovered by the logit.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveSchedule {
    pub alpha_left: TimeFn,
    pub alpha_right: TimeFn,
    pub field: FieldFn,
    pub epsilon: f64,
    pub ell: f64,
}

impl DriveSchedule {
    pub fn equilibrium(theta: f64) -> Self {
        DriveSchedule {
            alpha_left: TimeFn::constant(theta),
            alpha_right: TimeFn::constant(theta),
            field: FieldFn::Zero,
            epsilon: 1.0,
            ell: 1.0,
        }
    }

    pub fn constant(alpha0: f64, alpha1: f64) -> Self {
        DriveSchedule {
            alpha_left: TimeFn::constant(alpha0),
            alpha_right: TimeFn::constant(alpha1),
            field: FieldFn::Zero,
            epsilon: 1.0,
            ell: 1.0,
        }
    }

    /// Same density schedule at both boundaries (the quasi-static setting).
    pub fn symmetric(alpha: TimeFn) -> Self {
        DriveSchedule {
            alpha_left: alpha,
            alpha_right: alpha,
            field: FieldFn::Zero,
            epsilon: 1.0,
            ell: 1.0,
        }
    }

    #[inline]
    pub fn alpha0(&self, t: f64) -> f64 {
        self.alpha_left.eval(t)
    }

    #[inline]
    pub fn alpha1(&self, t: f64) -> f64 {
        self.alpha_right.eval(t)
    }

    pub fn lambda0(&self, t: f64) -> f64 {
        logit(self.alpha0(t))
    }

    pub fn lambda1(&self, t: f64) -> f64 {
        logit(self.alpha1(t))
    }

    /// Largest rate of change of any drive ingredient, used to pick frozen
    /// sub-interval lengths in the exact layer.
    pub fn max_abs_deriv(&self) -> f64 {
        self.alpha_left
            .max_abs_deriv()
            .max(self.alpha_right.max_abs_deriv())
            .max(self.field.max_abs_deriv_t())
    }

    pub fn validate(&self, t_end: f64) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::Validation("epsilon must be positive".into()));
        }
        if self.ell <= 0.0 {
            return Err(Error::Validation("ell must be positive".into()));
        }
        for (name, f) in [("alpha_left", &self.alpha_left), ("alpha_right", &self.alpha_right)] {
            let (lo, hi) = f.range(0.0, t_end);
            if lo <= 0.0 || hi >= 1.0 {
                return Err(Error::Validation(format!(
                    "{} leaves (0,1) on [0,{}]: range [{}, {}]",
                    name, t_end, lo, hi
                )));
            }
        }
        Ok(())
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
