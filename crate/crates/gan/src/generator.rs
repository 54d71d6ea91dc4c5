//! U-Net generator: strided conv encoder, transposed-conv decoder with skip
//! connections, dropout in the innermost decoder layers as the noise source.

use ndarray::{concatenate, Array4, Axis, Slice};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{
    tanh_backward, tanh_forward, Conv2d, ConvTranspose2d, Dropout, LeakyRelu, Param,
};
use crate::scalar::NnScalar;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Number of stride-2 encoder stages; input size must be divisible by 2^depth.
    pub depth: usize,
    pub base_channels: usize,
    pub dropout: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { in_channels: 3, out_channels: 1, depth: 4, base_channels: 16, dropout: 0.5 }
    }
}

impl GeneratorConfig {
    pub fn channels_at(&self, level: usize) -> usize {
        self.base_channels * (1 << level.min(3))
    }
}

pub struct Generator<T: NnScalar> {
    pub config: GeneratorConfig,
    encoders: Vec<Conv2d<T>>,
    enc_acts: Vec<LeakyRelu<T>>,
    decoders: Vec<ConvTranspose2d<T>>,
    dec_dropouts: Vec<Option<Dropout<T>>>,
    final_deconv: ConvTranspose2d<T>,
    // forward caches
    enc_inputs: Vec<Array4<T>>,
    dec_relu_masks: Vec<Array4<T>>,
    final_relu_mask: Option<Array4<T>>,
    output_cache: Option<Array4<T>>,
}

impl<T: NnScalar> Generator<T> {
    pub fn new(config: GeneratorConfig, seed: u64) -> Self {
        assert!(config.depth >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut encoders = Vec::new();
        let mut enc_acts = Vec::new();
        let mut cin = config.in_channels;
        for level in 0..config.depth {
            let cout = config.channels_at(level);
            encoders.push(Conv2d::new(&mut rng, cin, cout, 4, 2, 1));
            enc_acts.push(LeakyRelu::new(0.2));
            cin = cout;
        }
        // decoder stage i upsamples from level depth-1-i toward level depth-2-i
        let mut decoders = Vec::new();
        let mut dec_dropouts = Vec::new();
        let n_dropout = (config.depth - 1).min(3);
        for i in 0..config.depth - 1 {
            let src_level = config.depth - 1 - i;
            // after the first decoder, inputs carry the concatenated skip
            let dec_in = if i == 0 {
                config.channels_at(src_level)
            } else {
                2 * config.channels_at(src_level)
            };
            let dec_out = config.channels_at(src_level - 1);
            decoders.push(ConvTranspose2d::new(&mut rng, dec_in, dec_out, 4, 2, 1));
            dec_dropouts.push(if i < n_dropout && config.dropout > 0.0 {
                Some(Dropout::new(config.dropout))
            } else {
                None
            });
        }
        let final_in = if config.depth == 1 {
            config.channels_at(0)
        } else {
            2 * config.channels_at(0)
        };
        let final_deconv = ConvTranspose2d::new(&mut rng, final_in, config.out_channels, 4, 2, 1);
        Self {
            config,
            encoders,
            enc_acts,
            decoders,
            dec_dropouts,
            final_deconv,
            enc_inputs: Vec::new(),
            dec_relu_masks: Vec::new(),
            final_relu_mask: None,
            output_cache: None,
        }
    }

    /// `rng = Some` enables dropout noise; `None` gives the deterministic map.
    pub fn forward(&mut self, x: &Array4<T>, mut rng: Option<&mut ChaCha8Rng>) -> Array4<T> {
        let (_, c, h, w) = x.dim();
        assert_eq!(c, self.config.in_channels);
        assert_eq!(h % (1 << self.config.depth), 0, "height not divisible by 2^depth");
        assert_eq!(w % (1 << self.config.depth), 0, "width not divisible by 2^depth");
        self.enc_inputs.clear();
        self.dec_relu_masks.clear();

        // encoder; skips[level] holds the activation entering decoder concat
        let mut skips: Vec<Array4<T>> = Vec::with_capacity(self.config.depth);
        let mut cur = x.clone();
        for level in 0..self.config.depth {
            self.enc_inputs.push(cur.clone());
            let z = self.encoders[level].forward(&cur);
            cur = self.enc_acts[level].forward(&z);
            skips.push(cur.clone());
        }

        // decoder
        for i in 0..self.decoders.len() {
            let mask = cur.mapv(|v| if v > T::zero() { T::one() } else { T::zero() });
            let activated = &cur * &mask;
            self.dec_relu_masks.push(mask);
            let mut up = self.decoders[i].forward(&activated);
            if let Some(d) = self.dec_dropouts[i].as_mut() {
                up = d.forward(&up, rng.as_deref_mut());
            }
            let skip = &skips[self.config.depth - 2 - i];
            cur = concatenate![Axis(1), up.view(), skip.view()];
        }

        let mask = cur.mapv(|v| if v > T::zero() { T::one() } else { T::zero() });
        let activated = &cur * &mask;
        self.final_relu_mask = Some(mask);
        let pre = self.final_deconv.forward(&activated);
        let y = tanh_forward(&pre);
        self.output_cache = Some(y.clone());
        y
    }

    /// Returns the gradient w.r.t. the RGB input.
    pub fn backward(&mut self, dy: &Array4<T>) -> Array4<T> {
        let y = self.output_cache.take().expect("backward without forward");
        let dpre = tanh_backward(dy, &y);
        let dact = self.final_deconv.backward(&dpre);
        let mut dcur = dact * &self.final_relu_mask.take().unwrap();

        // skip gradients accumulate into the encoder backward chain
        let mut dskips: Vec<Option<Array4<T>>> = vec![None; self.config.depth];
        for i in (0..self.decoders.len()).rev() {
            let skip_level = self.config.depth - 2 - i;
            let up_channels = dcur.dim().1 - {
                let s = self.config.channels_at(skip_level);
                s
            };
            let dup = dcur
                .slice_axis(Axis(1), Slice::from(0..up_channels))
                .to_owned();
            let dskip = dcur
                .slice_axis(Axis(1), Slice::from(up_channels..))
                .to_owned();
            match &mut dskips[skip_level] {
                Some(acc) => *acc += &dskip,
                slot => *slot = Some(dskip),
            }
            let dup = match self.dec_dropouts[i].as_mut() {
                Some(d) => d.backward(&dup),
                None => dup,
            };
            let dact = self.decoders[i].backward(&dup);
            dcur = dact * &self.dec_relu_masks[i];
        }

        // deepest encoder output feeds the first decoder's relu directly
        let mut grad = dcur;
        for level in (0..self.config.depth).rev() {
            if let Some(dskip) = dskips[level].take() {
                grad += &dskip;
            }
            let dz = self.enc_acts[level].backward(&grad);
            grad = self.encoders[level].backward(&dz);
        }
        grad
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for e in &mut self.encoders {
            out.extend(e.params_mut());
        }
        for d in &mut self.decoders {
            out.extend(d.params_mut());
        }
        out.extend(self.final_deconv.params_mut());
        out
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn forward_shape_and_range() {
        let mut g = Generator::<f32>::new(GeneratorConfig::default(), 7);
        let x = Array4::from_elem((2, 3, 64, 64), 0.1f32);
        let y = g.forward(&x, None);
        assert_eq!(y.dim(), (2, 1, 64, 64));
        assert!(y.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn deterministic_without_rng() {
        let mut g = Generator::<f32>::new(GeneratorConfig::default(), 7);
        let x = Array4::from_shape_fn((1, 3, 32, 32), |(_, c, y, x)| {
            ((c + y + x) as f32 * 0.01).sin()
        });
        let a = g.forward(&x, None);
        let b = g.forward(&x, None);
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_rng_changes_output() {
        let mut g = Generator::<f32>::new(GeneratorConfig::default(), 7);
        let x = Array4::from_elem((1, 3, 32, 32), 0.3f32);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let a = g.forward(&x, Some(&mut r1));
        let b = g.forward(&x, Some(&mut r2));
        assert_ne!(a, b);
    }

    /// End-to-end gradient check on a tiny f64 generator.
    #[test]
    fn gradients_match_finite_differences() {
        let cfg = GeneratorConfig {
            in_channels: 2,
            out_channels: 1,
            depth: 2,
            base_channels: 2,
            dropout: 0.0,
        };
        let mut g = Generator::<f64>::new(cfg, 3);
        let mut r = ChaCha8Rng::seed_from_u64(9);
        // zero-initialized biases put rectifier inputs exactly on their kinks
        // (rectified-away receptive fields sum to 0.0 + bias); nudge them off
        // so central differences measure a true derivative
        for p in g.params_mut() {
            if p.value.ndim() == 1 {
                p.value.mapv_inplace(|v| v + 0.01 * (r.gen::<f64>() - 0.5));
            }
        }
        let x = Array4::from_shape_fn((1, 2, 8, 8), |_| r.gen::<f64>() - 0.5);

        // loss = sum(y^2)
        let y = g.forward(&x, None);
        let dy = y.mapv(|v| 2.0 * v);
        let dx = g.backward(&dy);

        let eps = 1e-6;
        for idx in [(0, 0, 0, 0), (0, 1, 4, 3), (0, 0, 7, 7)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let lp: f64 = g.forward(&xp, None).iter().map(|v| v * v).sum();
            let lm: f64 = g.forward(&xm, None).iter().map(|v| v * v).sum();
            let num = (lp - lm) / (2.0 * eps);
            let rel = (dx[idx] - num).abs() / num.abs().max(1e-8);
            assert!(rel < 1e-3, "input grad {idx:?}: {} vs {num}", dx[idx]);
        }

        // spot-check a handful of weights across layers
        g.zero_grad();
        let y = g.forward(&x, None);
        let dy = y.mapv(|v| 2.0 * v);
        g.backward(&dy);
        let grads: Vec<Vec<f64>> = g
            .params_mut()
            .iter()
            .map(|p| p.grad.iter().copied().collect())
            .collect();
        let n_params = grads.len();
        for pi in 0..n_params {
            let wi = grads[pi].len() / 2;
            let orig = {
                let mut ps = g.params_mut();
                let v = ps[pi].value.as_slice_mut().unwrap();
                let o = v[wi];
                v[wi] = o + eps;
                o
            };
            let lp: f64 = g.forward(&x, None).iter().map(|v| v * v).sum();
            {
                let mut ps = g.params_mut();
                ps[pi].value.as_slice_mut().unwrap()[wi] = orig - eps;
            }
            let lm: f64 = g.forward(&x, None).iter().map(|v| v * v).sum();
            {
                let mut ps = g.params_mut();
                ps[pi].value.as_slice_mut().unwrap()[wi] = orig;
            }
            let num = (lp - lm) / (2.0 * eps);
            let got = grads[pi][wi];
            let rel = (got - num).abs() / num.abs().max(1e-6);
            assert!(rel < 1e-3, "param {pi} idx {wi}: {got} vs {num}");
        }
    }
}
