//! Product measures, cylinder-function expectations, transport coefficients,
//! free energy and relative entropy: the exact probabilistic layer.
//!
//! Everything here is closed-form or exhaustive enumeration; this module is
//! the oracle the samplers and solvers are checked against.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{logit, Configuration, CylinderFunction, RateModel};

/// Hard cap on the lattice size of exhaustive 2^{N-1} computations.
pub const EXACT_CAPACITY: usize = 20;

// ---------------------------------------------------------------------------
// Product measures
// ---------------------------------------------------------------------------

/// Bernoulli product measure `ν^N_{γ(·)}` on `Σ_N`, with marginal density
/// `γ(j)` at site `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMeasure {
    gamma: Vec<f64>,
}

impl ProductMeasure {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::Validation("empty density profile".into()));
        }
        if gamma.iter().any(|&g| !(0.0..=1.0).contains(&g) || !(g > 0.0 && g < 1.0)) {
            return Err(Error::Validation(
                "product-measure densities must lie strictly inside (0,1)".into(),
            ));
        }
        Ok(ProductMeasure { gamma })
    }

    /// Homogeneous measure `ν_θ` on a lattice of size `N`.
    pub fn homogeneous(n: usize, theta: f64) -> Result<Self> {
        ProductMeasure::new(vec![theta; n - 1])
    }

    /// Local-equilibrium measure with `γ(j) = profile(j/N)`.
    pub fn from_profile(n: usize, profile: impl Fn(f64) -> f64) -> Result<Self> {
        ProductMeasure::new((1..n).map(|j| profile(j as f64 / n as f64)).collect())
    }

    pub fn n(&self) -> usize {
        self.gamma.len() + 1
    }

    #[inline]
    pub fn density(&self, j: usize) -> f64 {
        self.gamma[j - 1]
    }

    pub fn densities(&self) -> &[f64] {
        &self.gamma
    }

    pub fn log_prob(&self, eta: &Configuration) -> f64 {
        assert_eq!(eta.n(), self.n());
        (1..self.n())
            .map(|j| {
                let g = self.density(j);
                if eta.get(j) == 1 {
                    g.ln()
                } else {
                    (1.0 - g).ln()
                }
            })
            .sum()
    }

    pub fn prob(&self, eta: &Configuration) -> f64 {
        self.log_prob(eta).exp()
    }

    /// The full 2^{N-1} probability vector, indexed by configuration bits.
    pub fn as_vector(&self) -> Result<Vec<f64>> {
        let sites = self.gamma.len();
        if sites > EXACT_CAPACITY {
            return Err(Error::Capacity(format!(
                "N-1 = {} exceeds the exact-layer cap of {}",
                sites, EXACT_CAPACITY
            )));
        }
        let dim = 1usize << sites;
        let mut p = vec![0.0; dim];
        for (key, slot) in p.iter_mut().enumerate() {
            let mut v = 1.0;
            for (idx, &g) in self.gamma.iter().enumerate() {
                v *= if (key >> idx) & 1 == 1 { g } else { 1.0 - g };
            }
            *slot = v;
        }
        Ok(p)
    }

    /// Independent Bernoulli draw of every site.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Configuration {
        let mut eta = Configuration::empty(self.n());
        for j in 1..self.n() {
            if rng.gen::<f64>() < self.density(j) {
                eta.set(j, 1);
            }
        }
        eta
    }
}

/// Exact expectation of `f(τ^{N,λ}_j η)` under a product measure, with
/// reservoir densities substituted off-lattice.
pub fn expectation(
    f: &CylinderFunction,
    mu: &ProductMeasure,
    j: i64,
    alpha0: f64,
    alpha1: f64,
) -> f64 {
    let n = mu.n() as i64;
    f.eval_with(|k| {
        let i = j + k;
        if i <= 0 {
            alpha0
        } else if i >= n {
            alpha1
        } else {
            mu.density(i as usize)
        }
    })
}

/// `Ψ̂(θ) = Σ_A c_A θ^{|A|}`.
pub fn hat_polynomial(f: &CylinderFunction, theta: f64) -> f64 {
    f.hat(theta)
}

/// Exact derivative of the hat polynomial.
pub fn hat_prime(f: &CylinderFunction, theta: f64) -> f64 {
    f.hat_prime(theta)
}

// ---------------------------------------------------------------------------
// Transport coefficients
// ---------------------------------------------------------------------------

/// Diffusivity, mobility, free energy and their derivatives, carried as the
/// exact polynomial `D(θ) = Σ_k d_k θ^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transport {
    d_coeffs: Vec<f64>,
}

impl Transport {
    /// `D(θ) = E_{ν_θ}[c]` read off the subset expansion of the rate.
    pub fn from_model(model: &RateModel) -> Self {
        let c = model.rate_function();
        let max_deg = c.terms().iter().map(|(a, _)| a.len()).max().unwrap_or(0);
        let mut d = vec![0.0; max_deg + 1];
        d[0] = c.constant_part();
        for (a, coeff) in c.terms() {
            d[a.len()] += coeff;
        }
        Transport { d_coeffs: d }
    }

    /// Constant diffusivity `D ≡ d0` (the SSEP case, or a CLI override).
    pub fn constant_d(d0: f64) -> Self {
        Transport { d_coeffs: vec![d0] }
    }

    /// Diffusivity from explicit polynomial coefficients `D(θ) = Σ d_k θ^k`;
    /// `D` must stay positive on `[0, 1]`.
    pub fn from_d_coefficients(d_coeffs: Vec<f64>) -> Result<Self> {
        if d_coeffs.is_empty() {
            return Err(Error::Validation("empty diffusivity polynomial".into()));
        }
        let t = Transport { d_coeffs };
        for k in 0..=1000 {
            let theta = k as f64 / 1000.0;
            if t.diffusivity(theta) <= 0.0 {
                return Err(Error::Validation(format!(
                    "diffusivity must be positive on [0,1]; D({}) = {}",
                    theta,
                    t.diffusivity(theta)
                )));
            }
        }
        Ok(t)
    }

    pub fn diffusivity(&self, theta: f64) -> f64 {
        poly_eval(&self.d_coeffs, theta)
    }

    pub fn diffusivity_prime(&self, theta: f64) -> f64 {
        self.d_coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c * k as f64 * theta.powi(k as i32 - 1))
            .sum()
    }

    /// `χ(θ) = θ(1-θ) D(θ)`.
    pub fn mobility(&self, theta: f64) -> f64 {
        theta * (1.0 - theta) * self.diffusivity(theta)
    }

    pub fn mobility_prime(&self, theta: f64) -> f64 {
        (1.0 - 2.0 * theta) * self.diffusivity(theta)
            + theta * (1.0 - theta) * self.diffusivity_prime(theta)
    }

    /// Kirchhoff transform `d(ρ) = ∫_0^ρ D(u) du`, exact for polynomial D.
    pub fn kirchhoff(&self, rho: f64) -> f64 {
        self.d_coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * rho.powi(k as i32 + 1) / (k as f64 + 1.0))
            .sum()
    }

    /// Bernoulli free energy `f(θ) = θ log θ + (1-θ) log(1-θ)`.
    pub fn free_energy(&self, theta: f64) -> f64 {
        theta * theta.ln() + (1.0 - theta) * (1.0 - theta).ln()
    }

    /// `f'(θ) = log(θ/(1-θ))`, analytic.
    pub fn f_prime(&self, theta: f64) -> f64 {
        logit(theta)
    }

    /// `f''(θ) = 1/(θ(1-θ))`, analytic.
    pub fn f_second(&self, theta: f64) -> f64 {
        1.0 / (theta * (1.0 - theta))
    }

    /// Static compressibility `𝔠(θ) = θ(1-θ)`.
    pub fn compressibility(&self, theta: f64) -> f64 {
        theta * (1.0 - theta)
    }
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// `D(θ) = E_{ν_θ}[c]`, via the hat polynomial.
pub fn diffusivity(model: &RateModel, theta: f64) -> f64 {
    model.rate_function().hat(theta)
}

/// `χ(θ) = θ(1-θ) E_{ν_θ}[c]`.
pub fn mobility(model: &RateModel, theta: f64) -> f64 {
    theta * (1.0 - theta) * diffusivity(model, theta)
}

/// Diffusivity from the covariance formula
/// `D(θ) = 𝔠(θ)^{-1} Σ_k ⟨h; η(k)⟩_θ` with `h = Σ_a m_a h_a`.
///
/// The covariances are computed by exhaustive enumeration of the window of
/// `h`, independently of the hat-polynomial route.
pub fn diffusivity_via_covariance(model: &RateModel, theta: f64) -> f64 {
    let h = model.decomposition().h_function();
    let window = h.support();
    assert!(window.len() <= EXACT_CAPACITY, "covariance window too large");

    // Only k inside the window of h contributes to ⟨h; η(k)⟩.
    let mut mean_h = 0.0;
    let mut mean_h_eta = vec![0.0; window.len()];
    for key in 0u64..(1u64 << window.len()) {
        let mut weight = 1.0;
        for idx in 0..window.len() {
            weight *= if (key >> idx) & 1 == 1 { theta } else { 1.0 - theta };
        }
        let hv = h.eval_with(|k| {
            let idx = window.iter().position(|&s| s == k).unwrap();
            ((key >> idx) & 1) as f64
        });
        mean_h += weight * hv;
        for (idx, acc) in mean_h_eta.iter_mut().enumerate() {
            if (key >> idx) & 1 == 1 {
                *acc += weight * hv;
            }
        }
    }
    let cov_sum: f64 = mean_h_eta.iter().map(|&e| e - mean_h * theta).sum();
    cov_sum / (theta * (1.0 - theta))
}

// ---------------------------------------------------------------------------
// Relative entropy
// ---------------------------------------------------------------------------

/// Relative entropy between two product measures on the same lattice:
/// `Σ_j [γ log(γ/ρ) + (1-γ) log((1-γ)/(1-ρ))]`.
pub fn relative_entropy_products(mu: &ProductMeasure, pi: &ProductMeasure) -> f64 {
    assert_eq!(mu.n(), pi.n(), "product measures on different lattices");
    (1..mu.n())
        .map(|j| {
            let g = mu.density(j);
            let r = pi.density(j);
            g * (g / r).ln() + (1.0 - g) * ((1.0 - g) / (1.0 - r)).ln()
        })
        .sum()
}

/// Relative entropy `Σ_η p(η) log(p(η)/π(η))` of an arbitrary distribution
/// against a product measure, with the convention `0 log 0 = 0`.
pub fn relative_entropy_general(p: &[f64], pi: &ProductMeasure) -> Result<f64> {
    let sites = pi.n() - 1;
    if sites > EXACT_CAPACITY {
        return Err(Error::Capacity(format!(
            "N-1 = {} exceeds the exact-layer cap of {}",
            sites, EXACT_CAPACITY
        )));
    }
    if p.len() != 1 << sites {
        return Err(Error::Validation(format!(
            "probability vector has length {}, expected {}",
            p.len(),
            1usize << sites
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Validation(format!(
            "probability vector sums to {}, not 1",
            total
        )));
    }
    let mut h = 0.0;
    for (key, &pv) in p.iter().enumerate() {
        if pv <= 0.0 {
            continue; // 0 log 0 := 0; π has full support so no +∞ branch
        }
        let eta = Configuration::from_bits(pi.n(), key as u64);
        h += pv * (pv.ln() - pi.log_prob(&eta));
    }
    Ok(h)
}

/// `log ψ_t(η)` for the density of a local-equilibrium product measure with
/// profile `ρ` relative to the homogeneous reference `ν_θ`:
/// `Σ_j η(j)[f'(ρ_j) - f'(θ)] + log Z_N(θ) - log Z_N(ρ)`.
pub fn log_density_ratio(mu: &ProductMeasure, theta: f64, eta: &Configuration) -> f64 {
    assert_eq!(mu.n(), eta.n());
    let sites = (mu.n() - 1) as f64;
    let log_z_theta = -sites * (1.0 - theta).ln();
    let log_z_rho: f64 = -(1..mu.n()).map(|j| (1.0 - mu.density(j)).ln()).sum::<f64>();
    let field: f64 = (1..mu.n())
        .filter(|&j| eta.get(j) == 1)
        .map(|j| logit(mu.density(j)) - logit(theta))
        .sum();
    field + log_z_theta - log_z_rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriveSchedule, TimeFn};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expectation_is_product_of_marginals() {
        let f = CylinderFunction::constant(0.0).term(&[0, 1], 1.0);
        let mu = ProductMeasure::homogeneous(10, 0.5).unwrap();
        assert!((expectation(&f, &mu, 4, 0.5, 0.5) - 0.25).abs() < 1e-15);

        let mut gamma = vec![0.5; 9];
        gamma[3] = 0.2; // site 4
        gamma[4] = 0.8; // site 5
        let mu = ProductMeasure::new(gamma).unwrap();
        assert!((expectation(&f, &mu, 4, 0.5, 0.5) - 0.16).abs() < 1e-15);
    }

    #[test]
    fn expectation_matches_window_enumeration() {
        // f = 1 + η(-1) + η(2): E = 1 + 2θ, cross-checked by enumerating the
        // window states with Bernoulli weights.
        let f = CylinderFunction::constant(1.0).term(&[-1], 1.0).term(&[2], 1.0);
        let theta = 0.35;
        let mu = ProductMeasure::homogeneous(12, theta).unwrap();
        let got = expectation(&f, &mu, 5, theta, theta);
        let mut brute = 0.0;
        for key in 0u64..4 {
            let x_m1 = (key & 1) as f64;
            let x_2 = ((key >> 1) & 1) as f64;
            let w = (if key & 1 == 1 { theta } else { 1.0 - theta })
                * (if (key >> 1) & 1 == 1 { theta } else { 1.0 - theta });
            brute += w * (1.0 + x_m1 + x_2);
        }
        assert!((got - brute).abs() < 1e-14);
        assert!((got - (1.0 + 2.0 * theta)).abs() < 1e-14);
    }

    #[test]
    fn hat_polynomial_examples() {
        let f = CylinderFunction::constant(0.0).term(&[0, 1], 1.0);
        assert!((hat_polynomial(&f, 0.3) - 0.09).abs() < 1e-15);
        assert!((hat_prime(&f, 0.3) - 0.6).abs() < 1e-15);

        let c = CylinderFunction::constant(1.0).term(&[-1], 1.0).term(&[2], 1.0);
        assert!((hat_polynomial(&c, 0.4) - 1.8).abs() < 1e-15);
        assert!((hat_prime(&c, 0.4) - 2.0).abs() < 1e-15);

        let k = CylinderFunction::constant(5.0);
        assert_eq!(hat_polynomial(&k, 0.7), 5.0);
        assert_eq!(hat_prime(&k, 0.7), 0.0);
    }

    #[test]
    fn transport_presets() {
        let ssep = RateModel::ssep();
        assert_eq!(diffusivity(&ssep, 0.3), 1.0);
        assert!((mobility(&ssep, 0.3) - 0.21).abs() < 1e-15);

        let pe = RateModel::two_body();
        assert!((diffusivity(&pe, 0.25) - 1.5).abs() < 1e-15);
        assert!((mobility(&pe, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn covariance_route_matches_hat_route() {
        for model in [RateModel::ssep(), RateModel::two_body()] {
            for i in 1..10 {
                let theta = i as f64 / 10.0;
                let d_cov = diffusivity_via_covariance(&model, theta);
                let d = diffusivity(&model, theta);
                assert!(
                    (d_cov - d).abs() < 1e-10,
                    "{} at θ={}: {} vs {}",
                    model.name(),
                    theta,
                    d_cov,
                    d
                );
            }
        }
        assert!((diffusivity_via_covariance(&RateModel::two_body(), 0.5) - 2.0).abs() < 1e-12);
        assert!((diffusivity_via_covariance(&RateModel::two_body(), 0.25) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn einstein_relation() {
        for model in [RateModel::ssep(), RateModel::two_body()] {
            let tr = Transport::from_model(&model);
            for i in 1..10 {
                let theta = i as f64 / 10.0;
                let resid = tr.diffusivity(theta) - tr.mobility(theta) * tr.f_second(theta);
                assert!(resid.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kirchhoff_is_antiderivative() {
        let tr = Transport::from_model(&RateModel::two_body());
        // D = 1 + 2θ → d(ρ) = ρ + ρ².
        for &rho in &[0.1, 0.37, 0.8] {
            assert!((tr.kirchhoff(rho) - (rho + rho * rho)).abs() < 1e-14);
        }
    }

    #[test]
    fn entropy_products_examples() {
        let mu = ProductMeasure::homogeneous(8, 0.5).unwrap();
        assert_eq!(relative_entropy_products(&mu, &mu), 0.0);

        let pi = ProductMeasure::homogeneous(8, 0.25).unwrap();
        let per_site = 0.5 * (2.0f64).ln() + 0.5 * (2.0f64 / 3.0).ln();
        let h = relative_entropy_products(&mu, &pi);
        assert!((h - 7.0 * per_site).abs() < 1e-12);
        assert!((per_site - 0.143841).abs() < 1e-6);
        // Asymmetry of relative entropy.
        assert!((relative_entropy_products(&pi, &mu) - h).abs() > 1e-3);
    }

    #[test]
    fn entropy_general_agrees_with_products() {
        let mu = ProductMeasure::new(vec![0.2, 0.7, 0.45]).unwrap();
        let pi = ProductMeasure::new(vec![0.5, 0.3, 0.6]).unwrap();
        let h_prod = relative_entropy_products(&mu, &pi);
        let h_gen = relative_entropy_general(&mu.as_vector().unwrap(), &pi).unwrap();
        assert!((h_prod - h_gen).abs() < 1e-12);
        // Both orders, against the brute-force 8-state sum.
        let h_rev = relative_entropy_general(&pi.as_vector().unwrap(), &mu).unwrap();
        assert!((relative_entropy_products(&pi, &mu) - h_rev).abs() < 1e-12);
    }

    #[test]
    fn entropy_point_mass() {
        let n = 6;
        let theta = 0.3;
        let pi = ProductMeasure::homogeneous(n, theta).unwrap();
        let mut p = vec![0.0; 1 << (n - 1)];
        p[0] = 1.0; // empty configuration
        let h = relative_entropy_general(&p, &pi).unwrap();
        assert!((h + (n - 1) as f64 * (1.0 - theta).ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_unnormalized() {
        let pi = ProductMeasure::homogeneous(4, 0.5).unwrap();
        let p = vec![0.5; 8];
        assert!(relative_entropy_general(&p, &pi).is_err());
    }

    #[test]
    fn log_density_ratio_single_site() {
        let mu = ProductMeasure::new(vec![0.8]).unwrap();
        let mut eta = Configuration::empty(2);
        eta.set(1, 1);
        let lr = log_density_ratio(&mu, 0.5, &eta);
        assert!((lr - (0.8f64 / 0.5).ln()).abs() < 1e-12);
        assert!((lr - 0.4700).abs() < 1e-4);
    }

    #[test]
    fn density_ratio_normalizes() {
        // E_{ν_θ}[ψ] = 1 by exhaustive summation.
        let n = 9;
        let theta = 0.45;
        let mu = ProductMeasure::from_profile(n, |x| 0.3 + 0.4 * x).unwrap();
        let nu = ProductMeasure::homogeneous(n, theta).unwrap();
        let mut total = 0.0;
        for key in 0u64..(1 << (n - 1)) {
            let eta = Configuration::from_bits(n, key);
            total += nu.prob(&eta) * log_density_ratio(&mu, theta, &eta).exp();
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_vanishes_at_reference() {
        let theta = 0.4;
        let mu = ProductMeasure::homogeneous(7, theta).unwrap();
        for key in [0u64, 5, 63] {
            let eta = Configuration::from_bits(7, key);
            assert!(log_density_ratio(&mu, theta, &eta).abs() < 1e-13);
        }
    }

    #[test]
    fn sampling_statistics_and_determinism() {
        let n = 1001;
        let mu = ProductMeasure::homogeneous(n, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eta = mu.sample(&mut rng);
        let mean = eta.particles() as f64 / (n - 1) as f64;
        // 4σ binomial band around 0.5 for 1000 sites.
        assert!((mean - 0.5).abs() < 4.0 * 0.0158);

        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(mu.sample(&mut rng2), eta);
    }

    #[test]
    fn drive_densities_follow_logistic() {
        let drive = DriveSchedule::symmetric(TimeFn::Linear {
            base: 0.4,
            slope: 0.1,
        });
        let t = 0.7;
        let lam = drive.lambda0(t);
        assert!((crate::model::logistic(lam) - drive.alpha0(t)).abs() < 1e-14);
    }
}
