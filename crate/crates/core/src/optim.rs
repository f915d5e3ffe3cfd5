//! First-order update rules shared by training and mask optimization.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    GradientDescent,
    /// Adam with beta1 0.9, beta2 0.999, eps 1e-8.
    Adam,
}

impl Optimizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Optimizer::GradientDescent => "gd",
            Optimizer::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gd" | "sgd" => Some(Optimizer::GradientDescent),
            "adam" => Some(Optimizer::Adam),
            _ => None,
        }
    }
}

/// Optimizer state for a fixed list of parameter blocks.
#[derive(Debug, Clone)]
pub(crate) struct State {
    kind: Optimizer,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl State {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub(crate) fn new(kind: Optimizer, sizes: impl IntoIterator<Item = usize>) -> Self {
        let zeros: Vec<Vec<f64>> = match kind {
            Optimizer::GradientDescent => Vec::new(),
            Optimizer::Adam => sizes.into_iter().map(|n| vec![0.0; n]).collect(),
        };
        State {
            kind,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Call once per iteration, before the block updates.
    pub(crate) fn advance(&mut self) {
        self.step += 1;
    }

    /// Updates block `k` in place from its gradient.
    pub(crate) fn update(&mut self, k: usize, w: &mut [f64], g: impl Iterator<Item = f64>, lr: f64) {
        match self.kind {
            Optimizer::GradientDescent => {
                for (wi, gi) in w.iter_mut().zip(g) {
                    *wi -= lr * gi;
                }
            }
            Optimizer::Adam => {
                let m = &mut self.first[k];
                let v = &mut self.second[k];
                let c1 = 1.0 - libm::pow(Self::BETA1, self.step as f64);
                let c2 = 1.0 - libm::pow(Self::BETA2, self.step as f64);
                for (i, gi) in g.enumerate().take(w.len()) {
                    m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * gi;
                    v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * gi * gi;
                    w[i] -= lr * (m[i] / c1) / (libm::sqrt(v[i] / c2) + Self::EPS);
                }
            }
        }
    }
}
