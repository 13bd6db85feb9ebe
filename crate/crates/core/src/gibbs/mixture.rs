//! Seven-component normal mixture approximating the `log χ²(1)` density,
//! which turns the squared-log volatility equation into a conditionally
//! linear-Gaussian one.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureComponent {
    pub prob: f64,
    pub mean: f64,
    pub var: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureTable {
    components: Vec<MixtureComponent>,
}

/// Centring constant of the tabulated means (approximately `E[log χ²(1)]`).
const KSC_SHIFT: f64 = 1.2704;

const KSC: [(f64, f64, f64); 7] = [
    (0.00730, -10.12999, 5.79596),
    (0.10556, -3.97281, 2.61369),
    (0.00002, -8.56686, 5.17950),
    (0.04395, 2.77786, 0.16735),
    (0.34001, 0.61942, 0.64009),
    (0.24566, 1.79518, 0.34023),
    (0.25750, -1.08819, 1.26261),
];

impl MixtureTable {
    /// The Kim–Shephard–Chib table.
    pub fn ksc() -> Self {
        MixtureTable {
            components: KSC
                .iter()
                .map(|&(prob, mean, var)| MixtureComponent { prob, mean: mean - KSC_SHIFT, var })
                .collect(),
        }
    }

    /// A one-component table, handy for degenerate test cases.
    pub fn single(mean: f64, var: f64) -> Self {
        MixtureTable { components: vec![MixtureComponent { prob: 1.0, mean, var }] }
    }

    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.prob).sum();
        if components.is_empty() || (total - 1.0).abs() > 1e-12 || components.iter().any(|c| c.prob < 0.0 || c.var < 0.0) {
            return Err(Error::Config(format!("mixture probabilities must be nonnegative and sum to 1 (got {total})")));
        }
        Ok(MixtureTable { components })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn get(&self, i: usize) -> &MixtureComponent {
        &self.components[i]
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.prob * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.components.iter().map(|c| c.prob * (c.var + (c.mean - m).powi(2))).sum()
    }

    /// `log q_c + log N(value | mean_c, var_c)` up to the shared constant.
    pub(crate) fn log_weight(&self, c: usize, residual: f64) -> f64 {
        let comp = &self.components[c];
        let d = residual - comp.mean;
        comp.prob.ln() - 0.5 * comp.var.ln() - 0.5 * d * d / comp.var
    }
}
