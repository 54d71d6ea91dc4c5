//! Model evaluation: deterministic prediction plus SSIM/RMSE scoring of
//! predicted DEMs against ground truth, both in the [-1, 1] domain.

use ndarray::{Array4, Axis};

use rgb2dem_core::metrics::{rmse, ssim, EvalRecord};

use crate::data::{batch_tensors, plane_to_tile, TensorPair};
use crate::error::Result;
use crate::generator::Generator;
use crate::scalar::NnScalar;

/// Dropout-free forward pass.
pub fn predict_dem<T: NnScalar>(generator: &mut Generator<T>, rgb: &Array4<T>) -> Array4<T> {
    generator.forward(rgb, None)
}

/// Scores every pair; records come back in input order with clusters unset.
pub fn evaluate_model<T: NnScalar>(
    generator: &mut Generator<T>,
    pairs: &[TensorPair<T>],
) -> Result<Vec<EvalRecord>> {
    let mut records = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let (rgb, dem) = batch_tensors(&[pair])?;
        let pred = predict_dem(generator, &rgb);
        let pred_tile = plane_to_tile(
            pred.index_axis(Axis(0), 0).index_axis(Axis(0), 0),
            pair.georef,
        )?;
        let truth_tile = plane_to_tile(
            dem.index_axis(Axis(0), 0).index_axis(Axis(0), 0),
            pair.georef,
        )?;
        records.push(EvalRecord {
            pair_id: pair.pair_id.clone(),
            ssim: ssim(&pred_tile, &truth_tile)?,
            rmse: rmse(&pred_tile, &truth_tile)?,
            elevation_range: pair.elevation_range,
            cluster_id: None,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::prepare_pair;
    use crate::generator::GeneratorConfig;
    use rgb2dem_core::synth::synthesize_terrain_pair;

    #[test]
    fn self_comparison_scores_perfectly() {
        // feed the ground truth through the scorer directly
        let (rgb, dem) = synthesize_terrain_pair::<f32>(5, 32).unwrap();
        let pair = prepare_pair("p", &rgb, &dem).unwrap();
        let (_, d) = batch_tensors(&[&pair]).unwrap();
        let t = plane_to_tile(d.index_axis(Axis(0), 0).index_axis(Axis(0), 0), pair.georef).unwrap();
        assert!((ssim(&t, &t).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn untrained_model_produces_finite_scores() {
        let mut gen = Generator::<f32>::new(
            GeneratorConfig { depth: 2, base_channels: 4, ..Default::default() },
            9,
        );
        let pairs: Vec<_> = (0..3)
            .map(|i| {
                let (rgb, dem) = synthesize_terrain_pair::<f32>(20 + i, 32).unwrap();
                prepare_pair(&format!("p{i}"), &rgb, &dem).unwrap()
            })
            .collect();
        let records = evaluate_model(&mut gen, &pairs).unwrap();
        assert_eq!(records.len(), 3);
        for r in &records {
            assert!(r.ssim.is_finite() && (-1.0..=1.0).contains(&r.ssim));
            assert!(r.rmse.is_finite() && r.rmse >= 0.0);
            assert!(r.elevation_range > 0.0);
        }
    }
}
