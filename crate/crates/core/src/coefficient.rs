//! Estimated model coefficients with normal-theory tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    /// Two-sided p-value of the z-test.
    pub p_value: f64,
}

impl Coefficient {
    pub fn new(name: impl Into<String>, estimate: f64, se: f64) -> Self {
        let z = estimate / se;
        Self {
            name: name.into(),
            estimate,
            se,
            z,
            p_value: two_sided_p(z),
        }
    }
}

pub fn two_sided_p(z: f64) -> f64 {
    if z.is_finite() {
        2.0 * Normal::standard().sf(z.abs())
    } else {
        f64::NAN
    }
}
