//! Virtual queue of accumulated accuracy shortfall.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualQueue {
    pub q: f64,
    pub p_min: f64,
    /// (backlog before the update, slot mean accuracy) per slot.
    pub history: Vec<(f64, f64)>,
}

impl VirtualQueue {
    pub fn new(p_min: f64) -> Self {
        Self {
            q: 0.0,
            p_min,
            history: Vec::new(),
        }
    }

    /// q ← max(q − P̄ + P_min, 0). Returns the new backlog.
    pub fn update(&mut self, mean_accuracy: f64) -> f64 {
        self.history.push((self.q, mean_accuracy));
        self.q = (self.q - mean_accuracy + self.p_min).max(0.0);
        self.q
    }
}

pub fn queue_update(vq: &VirtualQueue, mean_accuracy: f64) -> VirtualQueue {
    let mut next = vq.clone();
    next.update(mean_accuracy);
    next
}
