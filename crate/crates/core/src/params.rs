use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Result};

/// Edge probabilities of the model.
///
/// * `alpha`: child to child of a neighbour.
/// * `beta`: child to its own parent.
/// * `gamma`: child to each of its parent's neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Params {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        Ok(Self {
            alpha: check_probability("alpha", alpha)?,
            beta: check_probability("beta", beta)?,
            gamma: check_probability("gamma", gamma)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.alpha, self.beta, self.gamma).map(|_| ())
    }

    /// Mean offspring of one edge per generation, `1 + 2γ + α`.
    pub fn edge_growth(&self) -> f64 {
        1.0 + 2.0 * self.gamma + self.alpha
    }

    /// `(1 + γ)(α + γ)`; the degree chain is recurrent below 1 and transient above.
    pub fn degree_product(&self) -> f64 {
        (1.0 + self.gamma) * (self.alpha + self.gamma)
    }

    /// True when every probability is 0 or 1, so growth is deterministic.
    pub fn is_deterministic(&self) -> bool {
        [self.alpha, self.beta, self.gamma]
            .iter()
            .all(|&p| p == 0.0 || p == 1.0)
    }
}

impl std::fmt::Display for Params {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "alpha={} beta={} gamma={}",
            self.alpha, self.beta, self.gamma
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(Params::new(0.5, 0.5, 0.5).is_ok());
        assert!(Params::new(1.1, 0.5, 0.5).is_err());
        assert!(Params::new(0.5, -0.5, 0.5).is_err());
        assert!(Params::new(0.5, 0.5, f64::NAN).is_err());
    }

    #[test]
    fn derived_quantities() {
        let p = Params::new(0.0, 1.0, 1.0).unwrap();
        assert_eq!(p.edge_growth(), 3.0);
        assert_eq!(p.degree_product(), 2.0);
        assert!(p.is_deterministic());
        assert!(!Params::new(0.0, 1.0, 0.2).unwrap().is_deterministic());
    }
}
