//! Named parameter storage and matching gradient buffers.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Initialization scheme of a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// U(−1/√fan_in, 1/√fan_in).
    FanIn(usize),
    Normal(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub path: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered parameter tensors keyed by layer path.
///
/// A set built with `materialize = false` records shapes only; it is used to
/// count parameters without allocating them.
#[derive(Debug, Clone)]
pub struct ParamSet {
    params: Vec<Param>,
    seed: u64,
    materialize: bool,
}

impl ParamSet {
    pub fn new(seed: u64, materialize: bool) -> Self {
        Self { params: Vec::new(), seed, materialize }
    }

    pub fn add(&mut self, path: impl Into<String>, shape: &[usize], init: Init) -> ParamId {
        let path = path.into();
        let numel: usize = shape.iter().product();
        let idx = self.params.len();
        let data = if self.materialize {
            let mut rng = rng_from(self.seed, &[0x7061_7261, idx as u64]);
            match init {
                Init::Zeros => vec![0.0; numel],
                Init::Ones => vec![1.0; numel],
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    (0..numel).map(|_| rng.random_range(-bound..bound)).collect()
                }
                Init::Normal(std) => {
                    let d = Normal::new(0.0, std).expect("finite std");
                    (0..numel).map(|_| d.sample(&mut rng)).collect()
                }
            }
        } else {
            Vec::new()
        };
        debug_assert!(self.params.iter().all(|p| p.path != path), "duplicate parameter path {path}");
        self.params.push(Param { path, shape: shape.to_vec(), data });
        ParamId(idx)
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].data
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn count(&self) -> usize {
        self.params.iter().map(Param::numel).sum()
    }

    pub fn find(&self, path: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.path == path)
    }

    /// Flat copies of every tensor, in order.
    pub fn values(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|p| p.data.clone()).collect()
    }

    pub fn set_values(&mut self, values: &[Vec<f64>]) {
        assert_eq!(values.len(), self.params.len());
        for (p, v) in self.params.iter_mut().zip(values) {
            assert_eq!(p.data.len(), v.len(), "shape mismatch for {}", p.path);
            p.data.copy_from_slice(v);
        }
    }
}

/// One gradient buffer per parameter, same order and shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(ps: &ParamSet) -> Self {
        Self { data: ps.params.iter().map(|p| vec![0.0; p.numel()]).collect() }
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.data[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            super::tensor::axpy(a, 1.0, b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().flatten().for_each(|v| *v *= s);
    }
}
