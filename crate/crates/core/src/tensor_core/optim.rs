use crate::error::{Result, RpoError};
use crate::rpo::ReadOnlyPromptSet;

use super::{Tape, Tensor};

/// Plain stochastic gradient descent with optional heavy-ball momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    /// `p ← p − lr·v`, `v = momentum·v + grad`. Consumes every gradient;
    /// a trainable tensor without one is an error.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        }
        for (i, p) in params.iter_mut().enumerate() {
            if !p.requires_grad() {
                continue;
            }
            let grad = p
                .take_grad()
                .ok_or_else(|| RpoError::MissingGradient(format!("parameter {i}")))?;
            let v = &mut self.velocity[i];
            if self.momentum == 0.0 {
                v.copy_from_slice(&grad);
            } else {
                for (vi, gi) in v.iter_mut().zip(&grad) {
                    *vi = self.momentum * *vi + gi;
                }
            }
            if self.lr == 0.0 {
                continue;
            }
            for (x, d) in p.data_mut().iter_mut().zip(v.iter()) {
                *x -= self.lr * d;
            }
        }
        Ok(())
    }
}

/// One plain SGD update of every prompt block, after which the tape is
/// cleared for the next step.
pub fn sgd_step(prompts: &mut ReadOnlyPromptSet, lr: f64, tape: &mut Tape) -> Result<()> {
    let mut sgd = Sgd::new(lr, 0.0);
    sgd.step(&mut prompts.trainable_mut())?;
    tape.clear();
    Ok(())
}
