//! Adam with the stagnation-triggered gradient shuffle.
//!
//! After each Adam update the effective gradient is compared with the one
//! used on the previous step. When `||G_prev - G||_F < trigger_eps` the
//! gradient is column-shuffled and the shuffled matrix replaces the fresh
//! gradient on the next step only.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::RandomSource;
use crate::shuffle::{apply_shuffle, shuffle_event, ShuffleEvent, ShuffleFn};

use super::adam::{AdamConfig, AdamState};

#[derive(Debug, Clone)]
pub struct SadamState {
    adam: AdamState,
    prev_grad: Option<DenseMatrix>,
    trigger_eps: f64,
    pending_shuffled: Option<DenseMatrix>,
    shuffle_log: Vec<ShuffleEvent>,
    rng: RandomSource,
    shuffle: ShuffleFn,
}

impl SadamState {
    pub fn new(shape: (usize, usize), config: AdamConfig, trigger_eps: f64, rng: RandomSource) -> Self {
        Self {
            adam: AdamState::new(shape, config),
            prev_grad: None,
            trigger_eps,
            pending_shuffled: None,
            shuffle_log: Vec::new(),
            rng,
            shuffle: apply_shuffle,
        }
    }

    /// Replaces the column shuffle (used to inject faults in tests).
    pub fn with_shuffle(mut self, shuffle: ShuffleFn) -> Self {
        self.shuffle = shuffle;
        self
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn trigger_eps(&self) -> f64 {
        self.trigger_eps
    }

    pub fn pending_shuffled(&self) -> Option<&DenseMatrix> {
        self.pending_shuffled.as_ref()
    }

    pub fn prev_grad(&self) -> Option<&DenseMatrix> {
        self.prev_grad.as_ref()
    }

    pub fn log(&self) -> &[ShuffleEvent] {
        &self.shuffle_log
    }

    /// One step. Returns whether the shuffle fired.
    pub fn step(&mut self, x: &mut DenseMatrix, fresh_grad: DenseMatrix) -> Result<bool> {
        if fresh_grad.shape() != x.shape() {
            return Err(Error::Shape {
                op: "sadam_step",
                left: x.shape(),
                right: fresh_grad.shape(),
            });
        }
        let grad = self.pending_shuffled.take().unwrap_or(fresh_grad);
        self.adam.step(x, &grad)?;

        let mut fired = false;
        if let Some(prev) = &self.prev_grad {
            if prev.distance(&grad)? < self.trigger_eps {
                let iteration = self.adam.t() as usize;
                let (shuffled, event) = shuffle_event(self.shuffle, &grad, iteration, &mut self.rng);
                self.pending_shuffled = Some(shuffled);
                self.shuffle_log.push(event);
                fired = true;
            }
        }
        self.prev_grad = Some(grad);
        Ok(fired)
    }
}
