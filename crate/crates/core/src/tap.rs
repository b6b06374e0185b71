//! Logistic growth model of the performance proxy.
//!
//! The objective is modelled as `dS/dt = k · S · (1 − S/S_max)`. Its
//! one-step Euler increment is the acceptance threshold θ used by the
//! controller, and the same recursion drives the surrogate learners.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::TapParams;

fn check_domain(s: f64, params: &TapParams) -> Result<()> {
    if !(0.0..=params.s_max).contains(&s) {
        return Err(Error::Domain(format!(
            "performance {s} outside [0, {}]",
            params.s_max
        )));
    }
    Ok(())
}

/// Instantaneous growth rate `k · s · (1 − s/s_max)`.
pub fn logistic_rate(s: f64, params: &TapParams) -> Result<f64> {
    check_domain(s, params)?;
    Ok(params.k * s * (1.0 - s / params.s_max))
}

/// Acceptance threshold θ: the growth the model expects over one step from
/// `s_prev`. Zero at both fixed points, maximal (`k · s_max · dt / 4`) at
/// `s_max / 2`.
pub fn threshold(s_prev: f64, params: &TapParams) -> Result<f64> {
    Ok(logistic_rate(s_prev, params)? * params.dt)
}

/// One Euler step scaled by `efficacy`, perturbed by `noise` and clamped back
/// into `[0, s_max]`.
///
/// With `efficacy = 1` and `noise = 0` the increment is bit-for-bit the
/// value returned by [`threshold`].
pub fn logistic_step(s: f64, params: &TapParams, efficacy: f64, noise: f64) -> Result<f64> {
    let next = s + logistic_rate(s, params)? * efficacy * params.dt + noise;
    Ok(next.clamp(0.0, params.s_max))
}

/// A simulated S(t) sequence for `t = 0..=steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub values: Vec<f64>,
    pub params: TapParams,
    pub noise_sigma: f64,
}

/// Gaussian step noise from a seeded generator. A zero sigma yields exact
/// zeros so noiseless paths stay bit-identical to the plain recursion.
#[derive(Debug, Clone)]
pub(crate) struct StepNoise {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl StepNoise {
    pub(crate) fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Domain(format!(
                "noise sigma must be nonnegative, got {sigma}"
            )));
        }
        let normal = if sigma > 0.0 {
            Some(Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?)
        } else {
            None
        };
        Ok(StepNoise {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal,
        })
    }

    pub(crate) fn sample(&mut self) -> f64 {
        match &self.normal {
            Some(normal) => normal.sample(&mut self.rng),
            None => 0.0,
        }
    }
}

pub fn simulate_trajectory(
    s0: f64,
    params: &TapParams,
    steps: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Trajectory> {
    params.validate()?;
    if !(s0 > 0.0 && s0 < params.s_max) {
        return Err(Error::Domain(format!(
            "initial performance {s0} must lie strictly inside (0, {})",
            params.s_max
        )));
    }
    if steps == 0 {
        return Err(Error::Domain("trajectory needs at least one step".into()));
    }
    let mut noise = StepNoise::new(noise_sigma, seed)?;
    let mut values = Vec::with_capacity(steps + 1);
    values.push(s0);
    let mut s = s0;
    for _ in 0..steps {
        s = logistic_step(s, params, 1.0, noise.sample())?;
        values.push(s);
    }
    Ok(Trajectory {
        values,
        params: *params,
        noise_sigma,
    })
}

/// Least-squares estimate of the rate constant from an observed series, with
/// `s_max` and `dt` held fixed:
///
/// `k̂ = Σ ΔS(t)·g(t) / Σ g(t)²`, where `g(t) = S(t)·(1 − S(t)/s_max)·dt`.
pub fn fit_k(values: &[f64], s_max: f64, dt: f64) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::DegenerateSeries(format!(
            "need at least 3 points, got {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=s_max).contains(*v)) {
        return Err(Error::Domain(format!("value {v} outside [0, {s_max}]")));
    }
    let (num, den) = values
        .windows(2)
        .map(|w| {
            let g = w[0] * (1.0 - w[0] / s_max) * dt;
            ((w[1] - w[0]) * g, g * g)
        })
        .fold((0.0, 0.0), |(n, d), (a, b)| (n + a, d + b));
    if den == 0.0 {
        return Err(Error::DegenerateSeries(
            "series sits at a fixed point (0 or s_max) throughout".into(),
        ));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(k: f64) -> TapParams {
        TapParams::new(k, 1.0, 1.0).unwrap()
    }

    #[test]
    fn rate_fixed_points_and_value() {
        let p = params(0.1);
        assert_eq!(logistic_rate(0.0, &p).unwrap(), 0.0);
        assert_eq!(logistic_rate(1.0, &p).unwrap(), 0.0);
        assert_eq!(logistic_rate(0.5, &p).unwrap(), 0.025);
        assert!(logistic_rate(-0.1, &p).is_err());
        assert!(logistic_rate(1.1, &p).is_err());
    }

    #[test]
    fn threshold_values() {
        let p = params(0.1);
        assert_eq!(threshold(1.0, &p).unwrap(), 0.0);
        assert_eq!(threshold(0.0, &p).unwrap(), 0.0);
        assert_eq!(threshold(0.5, &p).unwrap(), 0.025);
        assert!(threshold(2.0, &p).is_err());
    }

    #[test]
    fn one_step_trajectory() {
        let t = simulate_trajectory(0.5, &params(0.1), 1, 0.0, 0).unwrap();
        assert_eq!(t.values, vec![0.5, 0.525]);
    }

    #[test]
    fn noiseless_trajectory_increases_towards_ceiling() {
        let t = simulate_trajectory(0.1, &params(0.3), 50, 0.0, 0).unwrap();
        assert_eq!(t.values.len(), 51);
        assert!(t.values.windows(2).all(|w| w[1] > w[0]));
        assert!(*t.values.last().unwrap() > 0.99);
        assert!(t.values.iter().all(|&v| v <= 1.0));
    }

    #[test]
    fn trajectory_is_deterministic_per_seed() {
        let a = simulate_trajectory(0.2, &params(0.2), 40, 0.01, 9).unwrap();
        let b = simulate_trajectory(0.2, &params(0.2), 40, 0.01, 9).unwrap();
        let c = simulate_trajectory(0.2, &params(0.2), 40, 0.01, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn trajectory_preconditions() {
        assert!(simulate_trajectory(0.0, &params(0.1), 5, 0.0, 0).is_err());
        assert!(simulate_trajectory(1.0, &params(0.1), 5, 0.0, 0).is_err());
        assert!(simulate_trajectory(0.5, &params(0.1), 0, 0.0, 0).is_err());
        assert!(simulate_trajectory(0.5, &params(0.1), 5, -1.0, 0).is_err());
    }

    #[test]
    fn fit_recovers_k_from_noiseless_series() {
        let t = simulate_trajectory(0.1, &params(0.25), 60, 0.0, 0).unwrap();
        let k = fit_k(&t.values, 1.0, 1.0).unwrap();
        assert!((k - 0.25).abs() < 1e-9, "k̂ = {k}");
    }

    #[test]
    fn fit_constant_series_is_zero() {
        assert_eq!(fit_k(&[0.5, 0.5, 0.5], 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn fit_degenerate_series() {
        assert!(matches!(
            fit_k(&[1.0, 1.0, 1.0], 1.0, 1.0),
            Err(Error::DegenerateSeries(_))
        ));
        assert!(matches!(
            fit_k(&[0.0, 0.0, 0.0], 1.0, 1.0),
            Err(Error::DegenerateSeries(_))
        ));
        assert!(fit_k(&[0.5, 0.6], 1.0, 1.0).is_err());
    }

    #[test]
    fn fit_with_noise_over_seeds() {
        let p = params(0.25);
        for seed in 0..20 {
            let t = simulate_trajectory(0.1, &p, 100, 0.005, seed).unwrap();
            let k = fit_k(&t.values, 1.0, 1.0).unwrap();
            assert!((0.2..=0.3).contains(&k), "seed {seed}: k̂ = {k}");
        }
    }

    proptest! {
        #[test]
        fn threshold_nonnegative_and_bounded(s in 0.0f64..=2.0, k in 0.01f64..2.0, s_max in 0.5f64..2.0) {
            let p = TapParams::new(k, s_max, 1.0).unwrap();
            prop_assume!(s <= s_max);
            let theta = threshold(s, &p).unwrap();
            prop_assert!(theta >= 0.0);
            prop_assert!(theta <= k * s_max / 4.0 * (1.0 + 1e-12));
        }

        #[test]
        fn noiseless_never_exceeds_ceiling(s0 in 0.01f64..0.99, k in 0.01f64..1.0) {
            let t = simulate_trajectory(s0, &params(k), 30, 0.0, 0).unwrap();
            prop_assert!(t.values.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(t.values.iter().all(|&v| v <= 1.0));
        }
    }
}
