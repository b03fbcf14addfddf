use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{BatchNormState, Breakpoints, ConvKernel, Dense, LocalDense, LocalKernel};
use crate::tensor::{all_finite, cast_slice, Real};

/// Every array of the model. Also used, zero-initialized, as the gradient
/// container (running statistics then stay zero).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub conv1: ConvKernel<T>,
    pub local: LocalKernel<T>,
    pub bn: BatchNormState<T>,
    pub latent1: LocalDense<T>,
    pub latent2: Dense<T>,
    /// Back-end stack: `C → C`, `C → H`, `H → H`, `H → C`.
    pub dense: [Dense<T>; 4],
    /// `channels × (segments + 1)` slope values.
    pub saaf_slopes: Vec<T>,
    pub saaf_offset: Vec<T>,
    pub breakpoints: Breakpoints<T>,
}

/// Borrowed view of one named array.
pub struct ParamGroup<'a, T> {
    pub name: &'static str,
    pub dims: Vec<usize>,
    pub data: &'a [T],
}

pub const RUNNING_STAT_GROUPS: [&str; 2] = ["bn.running_mean", "bn.running_var"];

/// Groups updated during pretraining (front-end only).
pub const PRETRAIN_GROUPS: [&str; 6] = [
    "bn.beta",
    "bn.gamma",
    "conv1.bias",
    "conv1.weight",
    "local.bias",
    "local.weight",
];

pub fn is_trainable(name: &str) -> bool {
    !RUNNING_STAT_GROUPS.contains(&name)
}

fn glorot<T: Real>(r: &mut ChaCha8Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n)
        .map(|_| T::lit(r.random_range(-limit..limit)))
        .collect()
}

impl<T: Real> ModelParams<T> {
    /// Uniform Glorot weights, zero biases, identity SAAFs, unit batchnorm.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let c = cfg.channels;
        let h = cfg.saaf_hidden();
        let u = cfg.latent_units;
        let mut p = Self::zeros(cfg)?;
        p.conv1.weights = glorot(&mut r, c * cfg.kernel1_taps, cfg.kernel1_taps, c);
        p.local.weights = glorot(&mut r, c * cfg.kernel2_taps, cfg.kernel2_taps, 1);
        p.latent1.weights = glorot(&mut r, c * u * u, u, u);
        p.latent2.weights = glorot(&mut r, u * u, u, u);
        for d in p.dense.iter_mut() {
            d.weights = glorot(&mut r, d.n_out * d.n_in, d.n_in, d.n_out);
        }
        p.bn = BatchNormState::new(c);
        p.saaf_slopes = vec![T::one(); c * (cfg.saaf_segments + 1)];
        debug_assert_eq!(h, p.dense[1].n_out);
        Ok(p)
    }

    /// All-zero arrays with the shapes implied by `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        let h = cfg.saaf_hidden();
        let u = cfg.latent_units;
        let extent = T::lit(cfg.saaf_extent as f64);
        let mut bn = BatchNormState::new(c);
        bn.gamma.fill(T::zero());
        bn.running_var.fill(T::zero());
        Ok(Self {
            conv1: ConvKernel::zeros(c, cfg.kernel1_taps),
            local: LocalKernel::zeros(c, cfg.kernel2_taps),
            bn,
            latent1: LocalDense::zeros(c, u, u),
            latent2: Dense::zeros(u, u),
            dense: [
                Dense::zeros(c, c),
                Dense::zeros(h, c),
                Dense::zeros(h, h),
                Dense::zeros(c, h),
            ],
            saaf_slopes: vec![T::zero(); c * (cfg.saaf_segments + 1)],
            saaf_offset: vec![T::zero(); c],
            breakpoints: Breakpoints::uniform(cfg.saaf_segments, -extent, extent)?,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, g) in z.groups_mut() {
            g.fill(T::zero());
        }
        z
    }

    pub fn channels(&self) -> usize {
        self.conv1.filters
    }

    pub fn saaf_points(&self) -> usize {
        self.breakpoints.as_slice().len()
    }

    pub fn saaf_slopes_of(&self, c: usize) -> &[T] {
        let k = self.saaf_points();
        &self.saaf_slopes[c * k..(c + 1) * k]
    }

    /// Named arrays in sorted-name order.
    pub fn groups(&self) -> Vec<ParamGroup<'_, T>> {
        let c = self.channels();
        let k = self.saaf_points();
        let (u_out, u_in) = (self.latent1.n_out, self.latent1.n_in);
        let mut g = vec![
            ParamGroup {
                name: "bn.beta",
                dims: vec![c],
                data: &self.bn.beta,
            },
            ParamGroup {
                name: "bn.gamma",
                dims: vec![c],
                data: &self.bn.gamma,
            },
            ParamGroup {
                name: "bn.running_mean",
                dims: vec![c],
                data: &self.bn.running_mean,
            },
            ParamGroup {
                name: "bn.running_var",
                dims: vec![c],
                data: &self.bn.running_var,
            },
            ParamGroup {
                name: "conv1.bias",
                dims: vec![c],
                data: &self.conv1.bias,
            },
            ParamGroup {
                name: "conv1.weight",
                dims: vec![c, self.conv1.taps],
                data: &self.conv1.weights,
            },
            ParamGroup {
                name: "latent1.bias",
                dims: vec![c, u_out],
                data: &self.latent1.bias,
            },
            ParamGroup {
                name: "latent1.weight",
                dims: vec![c, u_out, u_in],
                data: &self.latent1.weights,
            },
            ParamGroup {
                name: "latent2.bias",
                dims: vec![self.latent2.n_out],
                data: &self.latent2.bias,
            },
            ParamGroup {
                name: "latent2.weight",
                dims: vec![self.latent2.n_out, self.latent2.n_in],
                data: &self.latent2.weights,
            },
            ParamGroup {
                name: "local.bias",
                dims: vec![c],
                data: &self.local.bias,
            },
            ParamGroup {
                name: "local.weight",
                dims: vec![c, self.local.taps],
                data: &self.local.weights,
            },
            ParamGroup {
                name: "saaf.offset",
                dims: vec![c],
                data: &self.saaf_offset,
            },
            ParamGroup {
                name: "saaf.slopes",
                dims: vec![c, k],
                data: &self.saaf_slopes,
            },
        ];
        const DENSE: [(&str, &str); 4] = [
            ("dense1.bias", "dense1.weight"),
            ("dense2.bias", "dense2.weight"),
            ("dense3.bias", "dense3.weight"),
            ("dense4.bias", "dense4.weight"),
        ];
        for (d, (bn, wn)) in self.dense.iter().zip(DENSE) {
            g.push(ParamGroup {
                name: bn,
                dims: vec![d.n_out],
                data: &d.bias,
            });
            g.push(ParamGroup {
                name: wn,
                dims: vec![d.n_out, d.n_in],
                data: &d.weights,
            });
        }
        g.sort_by_key(|p| p.name);
        g
    }

    /// Mutable named arrays, same order as [`Self::groups`].
    pub fn groups_mut(&mut self) -> Vec<(&'static str, &mut [T])> {
        let [d1, d2, d3, d4] = &mut self.dense;
        let mut g: Vec<(&'static str, &mut [T])> = vec![
            ("bn.beta", &mut self.bn.beta),
            ("bn.gamma", &mut self.bn.gamma),
            ("bn.running_mean", &mut self.bn.running_mean),
            ("bn.running_var", &mut self.bn.running_var),
            ("conv1.bias", &mut self.conv1.bias),
            ("conv1.weight", &mut self.conv1.weights),
            ("dense1.bias", &mut d1.bias),
            ("dense1.weight", &mut d1.weights),
            ("dense2.bias", &mut d2.bias),
            ("dense2.weight", &mut d2.weights),
            ("dense3.bias", &mut d3.bias),
            ("dense3.weight", &mut d3.weights),
            ("dense4.bias", &mut d4.bias),
            ("dense4.weight", &mut d4.weights),
            ("latent1.bias", &mut self.latent1.bias),
            ("latent1.weight", &mut self.latent1.weights),
            ("latent2.bias", &mut self.latent2.bias),
            ("latent2.weight", &mut self.latent2.weights),
            ("local.bias", &mut self.local.bias),
            ("local.weight", &mut self.local.weights),
            ("saaf.offset", &mut self.saaf_offset),
            ("saaf.slopes", &mut self.saaf_slopes),
        ];
        g.sort_by_key(|(n, _)| *n);
        g
    }

    pub fn group(&self, name: &str) -> Option<&[T]> {
        self.groups()
            .into_iter()
            .find(|g| g.name == name)
            .map(|g| g.data)
    }

    pub fn trainable_group_names(&self) -> Vec<&'static str> {
        self.groups()
            .into_iter()
            .map(|g| g.name)
            .filter(|n| is_trainable(n))
            .collect()
    }

    /// Number of learnable scalars (running statistics excluded).
    pub fn trainable_count(&self) -> usize {
        self.groups()
            .iter()
            .filter(|g| is_trainable(g.name))
            .map(|g| g.data.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|g| all_finite(g.data))
    }

    /// Adds `other` into `self`, group by group.
    pub fn add_assign(&mut self, other: &Self) {
        let src = other.groups();
        for ((_, dst), g) in self.groups_mut().into_iter().zip(src) {
            for (d, &s) in dst.iter_mut().zip(g.data) {
                *d += s;
            }
        }
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            conv1: ConvKernel {
                filters: self.conv1.filters,
                taps: self.conv1.taps,
                weights: cast_slice(&self.conv1.weights),
                bias: cast_slice(&self.conv1.bias),
            },
            local: LocalKernel {
                channels: self.local.channels,
                taps: self.local.taps,
                weights: cast_slice(&self.local.weights),
                bias: cast_slice(&self.local.bias),
            },
            bn: BatchNormState {
                gamma: cast_slice(&self.bn.gamma),
                beta: cast_slice(&self.bn.beta),
                running_mean: cast_slice(&self.bn.running_mean),
                running_var: cast_slice(&self.bn.running_var),
                momentum: U::lit(self.bn.momentum.to_f64_lossy()),
                epsilon: U::lit(self.bn.epsilon.to_f64_lossy()),
            },
            latent1: LocalDense {
                channels: self.latent1.channels,
                n_out: self.latent1.n_out,
                n_in: self.latent1.n_in,
                weights: cast_slice(&self.latent1.weights),
                bias: cast_slice(&self.latent1.bias),
            },
            latent2: cast_dense(&self.latent2),
            dense: [
                cast_dense(&self.dense[0]),
                cast_dense(&self.dense[1]),
                cast_dense(&self.dense[2]),
                cast_dense(&self.dense[3]),
            ],
            saaf_slopes: cast_slice(&self.saaf_slopes),
            saaf_offset: cast_slice(&self.saaf_offset),
            breakpoints: self.breakpoints.cast(),
        }
    }

    /// Checks that every array matches the shapes implied by `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let reference = Self::zeros(cfg)?;
        for (a, b) in self.groups().iter().zip(reference.groups()) {
            if a.name != b.name || a.dims != b.dims || a.data.len() != b.data.len() {
                return Err(Error::shape(format!(
                    "{}: dims {:?}, config implies {:?}",
                    a.name, a.dims, b.dims
                )));
            }
        }
        if self.breakpoints != reference.breakpoints {
            return Err(Error::shape("SAAF breakpoints differ from config"));
        }
        Ok(())
    }
}

fn cast_dense<A: Real, B: Real>(d: &Dense<A>) -> Dense<B> {
    Dense {
        n_out: d.n_out,
        n_in: d.n_in,
        weights: cast_slice(&d.weights),
        bias: cast_slice(&d.bias),
    }
}
