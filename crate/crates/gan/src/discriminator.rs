//! Patch discriminator over concatenated (RGB, DEM) pairs. Output is a grid
//! of per-patch logits; losses average over the grid.

use ndarray::{concatenate, Array4, Axis, Slice};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{Conv2d, LeakyRelu, Param};
use crate::scalar::NnScalar;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiscriminatorConfig {
    pub rgb_channels: usize,
    pub dem_channels: usize,
    pub base_channels: usize,
    /// Conv kernel size; 3 keeps the receptive grid valid on tiny tiles.
    #[serde(default = "default_kernel")]
    pub kernel: usize,
}

fn default_kernel() -> usize {
    4
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { rgb_channels: 3, dem_channels: 1, base_channels: 16, kernel: 4 }
    }
}

pub struct Discriminator<T: NnScalar> {
    pub config: DiscriminatorConfig,
    convs: Vec<Conv2d<T>>,
    acts: Vec<LeakyRelu<T>>,
    rgb_channels: usize,
}

impl<T: NnScalar> Discriminator<T> {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cin = config.rgb_channels + config.dem_channels;
        let c = config.base_channels;
        let k = config.kernel;
        let pad = if k % 2 == 0 { k / 2 - 1 } else { k / 2 };
        let convs = vec![
            Conv2d::new(&mut rng, cin, c, k, 2, pad),
            Conv2d::new(&mut rng, c, 2 * c, k, 2, pad),
            Conv2d::new(&mut rng, 2 * c, 4 * c, k, 1, pad),
            Conv2d::new(&mut rng, 4 * c, 1, k, 1, pad),
        ];
        let acts = (0..3).map(|_| LeakyRelu::new(0.2)).collect();
        Self { rgb_channels: config.rgb_channels, config, convs, acts }
    }

    /// Logit grid for an (RGB, DEM) pair.
    pub fn forward(&mut self, rgb: &Array4<T>, dem: &Array4<T>) -> Array4<T> {
        assert_eq!(rgb.dim().0, dem.dim().0);
        assert_eq!((rgb.dim().2, rgb.dim().3), (dem.dim().2, dem.dim().3));
        let mut cur = concatenate![Axis(1), rgb.view(), dem.view()];
        for i in 0..self.convs.len() {
            cur = self.convs[i].forward(&cur);
            if i < self.acts.len() {
                cur = self.acts[i].forward(&cur);
            }
        }
        cur
    }

    /// Returns (d_rgb, d_dem); the DEM half is what flows into the generator.
    pub fn backward(&mut self, dlogits: &Array4<T>) -> (Array4<T>, Array4<T>) {
        let mut grad = dlogits.clone();
        for i in (0..self.convs.len()).rev() {
            if i < self.acts.len() {
                grad = self.acts[i].backward(&grad);
            }
            grad = self.convs[i].backward(&grad);
        }
        let d_rgb = grad
            .slice_axis(Axis(1), Slice::from(0..self.rgb_channels))
            .to_owned();
        let d_dem = grad
            .slice_axis(Axis(1), Slice::from(self.rgb_channels..))
            .to_owned();
        (d_rgb, d_dem)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.extend(c.params_mut());
        }
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
    fn logit_grid_shape() {
        let mut d = Discriminator::<f32>::new(DiscriminatorConfig::default(), 5);
        let rgb = Array4::from_elem((2, 3, 64, 64), 0.2f32);
        let dem = Array4::from_elem((2, 1, 64, 64), -0.1f32);
        let y = d.forward(&rgb, &dem);
        assert_eq!(y.dim().0, 2);
        assert_eq!(y.dim().1, 1);
        assert_eq!(y.dim(), (2, 1, 14, 14));
    }

    #[test]
    fn dem_gradient_matches_finite_differences() {
        let cfg = DiscriminatorConfig { rgb_channels: 2, dem_channels: 1, base_channels: 2, kernel: 4 };
        let mut d = Discriminator::<f64>::new(cfg, 5);
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let rgb = Array4::from_shape_fn((1, 2, 16, 16), |_| r.gen::<f64>() - 0.5);
        let dem = Array4::from_shape_fn((1, 1, 16, 16), |_| r.gen::<f64>() - 0.5);

        let y = d.forward(&rgb, &dem);
        let dy = y.mapv(|v| 2.0 * v);
        let (_, d_dem) = d.backward(&dy);

        let eps = 1e-6;
        for idx in [(0, 0, 0, 0), (0, 0, 9, 5), (0, 0, 15, 15)] {
            let mut dp = dem.clone();
            dp[idx] += eps;
            let mut dm = dem.clone();
            dm[idx] -= eps;
            let lp: f64 = d.forward(&rgb, &dp).iter().map(|v| v * v).sum();
            let lm: f64 = d.forward(&rgb, &dm).iter().map(|v| v * v).sum();
            let num = (lp - lm) / (2.0 * eps);
            let rel = (d_dem[idx] - num).abs() / num.abs().max(1e-8);
            assert!(rel < 1e-3, "{} vs {num}", d_dem[idx]);
        }
    }
}
