use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use rand::Rng;

use super::RlError;

/// One decision as experienced by the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f32>,
    /// Index of the executed (shielded) action.
    pub a_safe: usize,
    pub r: f64,
    pub c: f64,
    pub s_next: Vec<f32>,
    /// Terminal transition: nothing is bootstrapped past it.
    pub done: bool,
    /// Episode cut by the time cap. Ends the n-step window but still
    /// bootstraps from `s_next`.
    pub truncated: bool,
}

/// Discounted reward and cost sums over `window` and the discount applied to
/// the bootstrap values (zero when the window ends in a terminal transition).
pub fn aggregate_window(window: &[(f64, f64)], gamma: f64, terminated: bool) -> (f64, f64, f64) {
    let mut ret = 0.0;
    let mut cost = 0.0;
    let mut g = 1.0;
    for &(r, c) in window {
        ret += g * r;
        cost += g * c;
        g *= gamma;
    }
    (ret, cost, if terminated { 0.0 } else { g })
}

/// Uniform minibatch drawn from the buffer. Targets are
/// `ret + discount · V̄(s_boot)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub s: Array2<f32>,
    pub a: Vec<usize>,
    pub ret: Array1<f32>,
    pub cost: Array1<f32>,
    pub discount: Array1<f32>,
    pub s_boot: Array2<f32>,
}

/// Read-only view of one stored, already aggregated entry.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTransition {
    pub s: Vec<f32>,
    pub a: usize,
    pub ret: f32,
    pub cost: f32,
    pub discount: f32,
    pub s_boot: Vec<f32>,
}

/// FIFO ring of n-step aggregated transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    dim: usize,
    n_step: usize,
    gamma: f64,
    s: Vec<f32>,
    s_boot: Vec<f32>,
    a: Vec<u8>,
    ret: Vec<f32>,
    cost: Vec<f32>,
    discount: Vec<f32>,
    len: usize,
    head: usize,
    pending: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, dim: usize, n_step: usize, gamma: f64) -> Result<Self, RlError> {
        if capacity == 0 || dim == 0 || n_step == 0 {
            return Err(RlError::InvalidConfig("buffer capacity, state size and n must be positive".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(RlError::InvalidConfig(format!("discount {gamma} outside [0, 1)")));
        }
        Ok(Self {
            capacity,
            dim,
            n_step,
            gamma,
            s: vec![0.0; capacity * dim],
            s_boot: vec![0.0; capacity * dim],
            a: vec![0; capacity],
            ret: vec![0.0; capacity],
            cost: vec![0.0; capacity],
            discount: vec![0.0; capacity],
            len: 0,
            head: 0,
            pending: VecDeque::with_capacity(n_step),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_step(&self) -> usize {
        self.n_step
    }

    /// Transitions waiting for their n-step window to fill.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Adds one transition. Complete windows are written to the ring; an
    /// episode end flushes every pending window, each truncated at the end.
    pub fn push(&mut self, t: Transition) -> Result<(), RlError> {
        if t.s.len() != self.dim || t.s_next.len() != self.dim {
            return Err(RlError::InvalidConfig(format!("state size {} != {}", t.s.len(), self.dim)));
        }
        if t.a_safe >= u8::MAX as usize {
            return Err(RlError::InvalidConfig(format!("action index {} out of range", t.a_safe)));
        }
        let end = t.done || t.truncated;
        self.pending.push_back(t);
        if end {
            while !self.pending.is_empty() {
                self.emit_front();
            }
        } else if self.pending.len() == self.n_step {
            self.emit_front();
        }
        Ok(())
    }

    /// Drops unfinished windows, e.g. when a run stops mid-episode.
    pub fn discard_pending(&mut self) {
        self.pending.clear();
    }

    fn emit_front(&mut self) {
        let window: Vec<(f64, f64)> = self.pending.iter().map(|t| (t.r, t.c)).collect();
        let last = self.pending.back().expect("non-empty window");
        let (ret, cost, discount) = aggregate_window(&window, self.gamma, last.done);
        let i = self.head;
        let d = self.dim;
        self.s_boot[i * d..(i + 1) * d].copy_from_slice(&last.s_next);
        let first = self.pending.pop_front().expect("non-empty window");
        self.s[i * d..(i + 1) * d].copy_from_slice(&first.s);
        self.a[i] = first.a_safe as u8;
        self.ret[i] = ret as f32;
        self.cost[i] = cost as f32;
        self.discount[i] = discount as f32;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Entry `i` in insertion order, oldest first.
    pub fn get(&self, i: usize) -> Option<StoredTransition> {
        if i >= self.len {
            return None;
        }
        let j = (self.head + self.capacity - self.len + i) % self.capacity;
        let d = self.dim;
        Some(StoredTransition {
            s: self.s[j * d..(j + 1) * d].to_vec(),
            a: self.a[j] as usize,
            ret: self.ret[j],
            cost: self.cost[j],
            discount: self.discount[j],
            s_boot: self.s_boot[j * d..(j + 1) * d].to_vec(),
        })
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch, RlError> {
        if self.len == 0 || batch == 0 {
            return Err(RlError::InvalidConfig("cannot sample an empty batch".into()));
        }
        let d = self.dim;
        let mut s = Array2::zeros((batch, d));
        let mut s_boot = Array2::zeros((batch, d));
        let mut out = Batch {
            s: Array2::zeros((0, d)),
            a: Vec::with_capacity(batch),
            ret: Array1::zeros(batch),
            cost: Array1::zeros(batch),
            discount: Array1::zeros(batch),
            s_boot: Array2::zeros((0, d)),
        };
        for b in 0..batch {
            let j = rng.gen_range(0..self.len);
            s.row_mut(b).as_slice_mut().expect("contiguous").copy_from_slice(&self.s[j * d..(j + 1) * d]);
            s_boot.row_mut(b).as_slice_mut().expect("contiguous").copy_from_slice(&self.s_boot[j * d..(j + 1) * d]);
            out.a.push(self.a[j] as usize);
            out.ret[b] = self.ret[j];
            out.cost[b] = self.cost[j];
            out.discount[b] = self.discount[j];
        }
        out.s = s;
        out.s_boot = s_boot;
        Ok(out)
    }
}
