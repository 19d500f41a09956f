//! Adam with per-parameter moment buffers.

use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

const PAR_THRESHOLD: usize = 1 << 15;

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One bias-corrected update. Element-wise, so the parallel path is
    /// bitwise identical to the serial one.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.steps += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.steps.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - beta2.powi(self.steps.min(i32::MAX as u64) as i32);
        let update = |(p, (g, (m, v))): (&mut f64, (&f64, (&mut f64, &mut f64)))| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= lr * mh / (vh.sqrt() + eps);
        };
        if params.len() >= PAR_THRESHOLD {
            params
                .par_iter_mut()
                .zip(grads.par_iter().zip(self.m.par_iter_mut().zip(self.v.par_iter_mut())))
                .for_each(update);
        } else {
            params
                .iter_mut()
                .zip(grads.iter().zip(self.m.iter_mut().zip(self.v.iter_mut())))
                .for_each(update);
        }
    }

    /// Keeps the moment rows (of `row_len` entries) whose index passes `keep`.
    pub fn retain_rows(&mut self, row_len: usize, keep: &[bool]) {
        assert_eq!(keep.len() * row_len, self.m.len());
        let filter = |buf: &mut Vec<f64>| {
            let mut out = Vec::with_capacity(buf.len());
            for (row, &k) in buf.chunks_exact(row_len).zip(keep) {
                if k {
                    out.extend_from_slice(row);
                }
            }
            *buf = out;
        };
        filter(&mut self.m);
        filter(&mut self.v);
    }

    /// Appends zeroed moment rows for newly added parameters.
    pub fn grow(&mut self, extra: usize) {
        self.m.resize(self.m.len() + extra, 0.0);
        self.v.resize(self.v.len() + extra, 0.0);
    }
}
