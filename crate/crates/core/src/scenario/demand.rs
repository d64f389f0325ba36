use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netio::OdMatrix;
use crate::rng::Rng;

/// Spatially correlated multiplicative OD perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdPerturbation {
    /// Smallest magnitude of the relative change of an entry.
    pub factor_low: f64,
    /// Largest magnitude of the relative change of an entry.
    pub factor_high: f64,
    /// Length scale of the exponential zone-factor covariance, in
    /// coordinate units.
    pub correlation_length: f64,
    /// Standard deviation of each zone factor before clamping.
    pub spread: f64,
}

impl Default for OdPerturbation {
    fn default() -> Self {
        Self {
            factor_low: 0.15,
            factor_high: 0.70,
            correlation_length: 10.0,
            spread: 0.35,
        }
    }
}

impl OdPerturbation {
    pub fn validate(&self) -> Result<()> {
        let ok = self.factor_low >= 0.0
            && self.factor_low <= self.factor_high
            && self.factor_high.is_finite()
            && self.spread >= 0.0
            && self.spread.is_finite()
            && self.correlation_length > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid OD perturbation {self:?}")))
        }
    }
}

/// Samples perturbed OD matrices from a fixed base matrix.
///
/// One Gaussian factor is drawn per zone with covariance
/// `spread² · exp(−dist(i, j) / correlation_length)` (independent when zone
/// coordinates are missing). Entry `(o, d)` changes by the mean of the two
/// zone factors, with its magnitude clamped to `[factor_low, factor_high]`.
#[derive(Clone, Debug)]
pub struct OdPerturber {
    params: OdPerturbation,
    /// lower Cholesky factor of the zone covariance
    factor: DMatrix<f64>,
}

impl OdPerturber {
    pub fn new(params: &OdPerturbation, zones: usize, zone_coords: Option<&[(f64, f64)]>) -> Result<Self> {
        params.validate()?;
        let s2 = params.spread * params.spread;
        let cov = match zone_coords {
            Some(xy) => {
                if xy.len() < zones {
                    return Err(Error::Config(format!("{} zone coordinates for {zones} zones", xy.len())));
                }
                DMatrix::from_fn(zones, zones, |i, j| {
                    let d = (xy[i].0 - xy[j].0).hypot(xy[i].1 - xy[j].1);
                    // jitter keeps coincident zones positive definite
                    s2 * (-d / params.correlation_length).exp() + if i == j { 1e-9 * s2 } else { 0.0 }
                })
            }
            None => DMatrix::from_diagonal_element(zones, zones, s2),
        };
        let factor = if s2 == 0.0 {
            DMatrix::zeros(zones, zones)
        } else {
            cov.cholesky()
                .ok_or_else(|| Error::Generation("zone factor covariance is not positive definite".into()))?
                .l()
        };
        Ok(Self {
            params: params.clone(),
            factor,
        })
    }

    /// Correlated per-zone factors.
    pub fn zone_factors(&self, rng: &mut Rng) -> Vec<f64> {
        let n = self.factor.nrows();
        let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
        (&self.factor * z).iter().copied().collect()
    }

    /// Relative change applied to an entry given its raw factor.
    pub fn clamp_change(&self, raw: f64) -> f64 {
        let sign = if raw < 0.0 { -1.0 } else { 1.0 };
        sign * raw.abs().clamp(self.params.factor_low, self.params.factor_high)
    }

    pub fn perturb(&self, base: &OdMatrix, od_id: usize, rng: &mut Rng) -> Result<OdMatrix> {
        let z = base.zones();
        if z != self.factor.nrows() {
            return Err(Error::Shape {
                op: "perturb_od",
                lhs: (self.factor.nrows(), self.factor.nrows()),
                rhs: (z, z),
            });
        }
        let f = self.zone_factors(rng);
        let demand = (0..z * z)
            .map(|k| {
                let (o, d) = (k / z, k % z);
                let q = base.get(o, d);
                if o == d || q == 0.0 {
                    return 0.0;
                }
                let change = self.clamp_change(0.5 * (f[o] + f[d]));
                (q * (1.0 + change)).max(0.0)
            })
            .collect();
        OdMatrix::new(od_id, z, demand)
    }
}
