//! Samplers for the upward jumps of a model and the downward switch jumps of a regime model.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::levy_model::{JumpSpec, SpectrallyPositiveModel};

/// Jump arrival rate and jump size law of one model.
#[derive(Debug, Clone)]
pub(crate) enum JumpSampler {
    None,
    Hyperexponential { rate: f64, cum: Vec<f64>, etas: Vec<f64> },
    Tabulated { rate: f64, cum: Vec<f64>, cells: Vec<(f64, f64, f64, f64)> },
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    w.iter()
        .map(|&x| {
            acc += x / total;
            acc
        })
        .collect()
}

/// Index of the first cumulative weight exceeding `u`.
pub(crate) fn pick(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

impl JumpSampler {
    pub(crate) fn from_model(model: &SpectrallyPositiveModel<f64>) -> Self {
        match model.jumps() {
            JumpSpec::None => Self::None,
            JumpSpec::Hyperexponential { arrival_rate, weights, rates } => {
                Self::Hyperexponential { rate: *arrival_rate, cum: cumulative(weights), etas: rates.clone() }
            }
            JumpSpec::Tabulated { .. } => {
                let cells = model.tabulated_cells();
                let masses: Vec<f64> = cells
                    .iter()
                    .map(|&(lo, hi, a, b)| a * (hi - lo) + 0.5 * b * (hi * hi - lo * lo))
                    .collect();
                Self::Tabulated { rate: model.jump_intensity(), cum: cumulative(&masses), cells }
            }
        }
    }

    pub(crate) fn rate(&self) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Hyperexponential { rate, .. } | Self::Tabulated { rate, .. } => *rate,
        }
    }

    /// Mean jump size.
    pub(crate) fn mean(&self) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Hyperexponential { cum, etas, .. } => {
                let mut prev = 0.0;
                cum.iter()
                    .zip(etas)
                    .map(|(&c, &e)| {
                        let p = c - prev;
                        prev = c;
                        p / e
                    })
                    .sum()
            }
            Self::Tabulated { cells, .. } => {
                let (m0, m1) = cells.iter().fold((0.0, 0.0), |(m0, m1), &(lo, hi, a, b)| {
                    (
                        m0 + a * (hi - lo) + 0.5 * b * (hi * hi - lo * lo),
                        m1 + 0.5 * a * (hi * hi - lo * lo) + b * (hi.powi(3) - lo.powi(3)) / 3.0,
                    )
                });
                m1 / m0
            }
        }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Hyperexponential { cum, etas, .. } => {
                let k = if cum.len() == 1 { 0 } else { pick(cum, rng.random::<f64>()) };
                let e: f64 = rng.sample(Exp1);
                e / etas[k]
            }
            Self::Tabulated { cum, cells, .. } => {
                let k = pick(cum, rng.random::<f64>());
                let (lo, hi, a, b) = cells[k];
                let mass = a * (hi - lo) + 0.5 * b * (hi * hi - lo * lo);
                // Invert the quadratic cell CDF.
                let target = rng.random::<f64>() * mass;
                let at_lo = a + b * lo;
                let dz = if b.abs() < 1e-14 * (1.0 + a.abs()) {
                    target / a
                } else {
                    2.0 * target / (at_lo + (at_lo * at_lo + 2.0 * b * target).max(0.0).sqrt())
                };
                (lo + dz).min(hi)
            }
        }
    }
}

/// Law of a non-positive switch jump: finite mixture of point masses and
/// negated exponential variables.
#[derive(Debug, Clone)]
pub(crate) struct SwitchSampler {
    cum: Vec<f64>,
    comps: Vec<SwitchDraw>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum SwitchDraw {
    Point(f64),
    Exponential(f64),
}

impl SwitchSampler {
    pub(crate) fn new(weights: &[f64], comps: Vec<SwitchDraw>) -> Result<Self> {
        if weights.is_empty() || weights.len() != comps.len() {
            return Err(Error::config("regime.switch_jumps", "mixture weights and components must match"));
        }
        Ok(Self { cum: cumulative(weights), comps })
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = if self.cum.len() == 1 { 0 } else { pick(&self.cum, rng.random::<f64>()) };
        match self.comps[k] {
            SwitchDraw::Point(at) => at,
            SwitchDraw::Exponential(rate) => {
                let e: f64 = rng.sample(Exp1);
                -e / rate
            }
        }
    }
}
