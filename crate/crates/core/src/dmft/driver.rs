use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::model::Driver;
use crate::seed::rng_from_seed;

/// Law of one driver increment `z_δ^t`: `Poisson(δκ̄)` or `N(δκ̄, δκ̄)`.
#[derive(Debug, Clone, Copy)]
pub enum DriverLaw {
    Poisson(Poisson<f64>),
    Gaussian(Normal<f64>),
}

impl DriverLaw {
    pub fn new(driver: Driver, kappa_bar: f64, delta: f64) -> Result<Self> {
        let rate = kappa_bar * delta;
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidInput(format!("driver rate δκ̄ must be positive, got {rate}")));
        }
        Ok(match driver {
            Driver::Poisson => DriverLaw::Poisson(Poisson::new(rate).map_err(|e| Error::InvalidInput(e.to_string()))?),
            Driver::Gaussian => {
                DriverLaw::Gaussian(Normal::new(rate, rate.sqrt()).map_err(|e| Error::InvalidInput(e.to_string()))?)
            }
        })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DriverLaw::Poisson(p) => p.sample(rng),
            DriverLaw::Gaussian(g) => g.sample(rng),
        }
    }
}

/// `n` iid driver increments.
pub fn sample_driver(driver: Driver, n: usize, kappa_bar: f64, delta: f64, seed: u64) -> Result<Vec<f64>> {
    let law = DriverLaw::new(driver, kappa_bar, delta)?;
    let mut rng = rng_from_seed(seed);
    Ok((0..n).map(|_| law.sample(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(z: &[f64]) -> (f64, f64) {
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn moments_match_for_both_drivers() {
        let n = 1_000_000;
        for driver in [Driver::Poisson, Driver::Gaussian] {
            let z = sample_driver(driver, n, 1.0, 0.05, 21).unwrap();
            let (mean, var) = moments(&z);
            assert!((mean - 0.05).abs() < 5.0 * (0.05f64 / n as f64).sqrt(), "{driver}: {mean}");
            assert!((var / 0.05 - 1.0).abs() < 0.05, "{driver}: {var}");
        }
    }

    #[test]
    fn poisson_zero_fraction_matches_pmf() {
        let n = 1_000_000;
        let z = sample_driver(Driver::Poisson, n, 1.0, 0.05, 8).unwrap();
        assert!(z.iter().all(|&v| v >= 0.0 && v.fract() == 0.0));
        let zeros = z.iter().filter(|&&v| v == 0.0).count() as f64 / n as f64;
        let pmf0 = (-0.05f64).exp();
        assert!((zeros / pmf0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn rejects_nonpositive_rate() {
        assert!(sample_driver(Driver::Poisson, 3, 0.0, 0.05, 1).is_err());
    }
}
