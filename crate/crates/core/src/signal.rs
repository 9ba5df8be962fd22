//! Uniformly sampled pressure traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    /// Pa
    pub samples: Vec<f64>,
    /// Hz
    pub sampling_frequency: f64,
    /// s
    pub start_time: f64,
}

impl SignalTrace {
    pub fn new(samples: Vec<f64>, sampling_frequency: f64, start_time: f64) -> Result<SignalTrace> {
        if !(sampling_frequency > 0.0 && sampling_frequency.is_finite()) {
            return Err(Error::config(format!("sampling frequency must be positive, got {sampling_frequency}")));
        }
        if samples.len() < 2 {
            return Err(Error::shape(format!("a trace needs at least 2 samples, got {}", samples.len())));
        }
        if !start_time.is_finite() {
            return Err(Error::config("start time must be finite"));
        }
        Ok(SignalTrace { samples, sampling_frequency, start_time })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sampling_frequency
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start_time + i as f64 / self.sampling_frequency
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 / self.sampling_frequency
    }

    pub fn scaled(&self, a: f64) -> SignalTrace {
        SignalTrace { samples: self.samples.iter().map(|x| a * x).collect(), ..self.clone() }
    }

    /// Σ x², Pa²·samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn same_layout(&self, other: &SignalTrace) -> bool {
        self.len() == other.len()
            && self.sampling_frequency == other.sampling_frequency
            && self.start_time == other.start_time
    }
}
