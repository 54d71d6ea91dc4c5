//! Evaluation metrics: windowed SSIM on the signed-unit scale, per-pixel
//! RMSE, aggregate statistics, elevation-range clustering, and histogram
//! material for reports.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tile::{RasterTile, ValueDomain};

/// SSIM window: 11x11 Gaussian, sigma 1.5, the canonical defaults.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
/// Dynamic range of signed-unit data.
pub const SSIM_DYNAMIC_RANGE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub pair_id: String,
    pub ssim: f64,
    pub rmse: f64,
    pub elevation_range: f64,
    pub cluster_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub mean_ssim: f64,
    pub median_ssim: f64,
    pub mean_rmse: f64,
    pub median_rmse: f64,
    pub count: usize,
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Valid-mode separable filter: horizontal then vertical pass.
fn filter_valid(data: &[f64], w: usize, h: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        for ox in 0..ow {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * data[y * w + ox + k];
            }
            horiz[y * ow + ox] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * horiz[(oy + k) * ow + ox];
            }
            out[oy * ow + ox] = acc;
        }
    }
    out
}

/// Mean local SSIM over sliding Gaussian windows.
///
/// Implemented as whole-image separable Gaussian filtering of the moment
/// maps (valid mode), then the per-window SSIM combination. Windows touching
/// any nodata pixel in either tile are skipped; skipping every window is an
/// error.
pub fn ssim<T: Scalar>(a: &RasterTile<T>, b: &RasterTile<T>) -> Result<f64> {
    a.expect_domain(ValueDomain::SignedUnit)?;
    b.expect_domain(ValueDomain::SignedUnit)?;
    if a.bands() != 1 || b.bands() != 1 {
        return Err(CoreError::InvalidArgument("ssim expects single-band tiles".into()));
    }
    if a.width() != b.width() || a.height() != b.height() {
        return Err(CoreError::Alignment(format!(
            "ssim tiles {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(CoreError::InvalidArgument(format!(
            "tile {w}x{h} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} ssim window"
        )));
    }

    let n = w * h;
    let mut x = vec![0.0f64; n];
    let mut y = vec![0.0f64; n];
    let mut valid = vec![0.0f64; n];
    for p in 0..n {
        let ok = !a.nodata_mask()[p] && !b.nodata_mask()[p];
        if ok {
            x[p] = a.values()[p].to_f64_lossy();
            y[p] = b.values()[p].to_f64_lossy();
            valid[p] = 1.0;
        }
    }
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u * v).collect();

    let kernel = gaussian_kernel();
    let box_kernel = [1.0 / SSIM_WINDOW as f64; SSIM_WINDOW];
    let mu_x = filter_valid(&x, w, h, &kernel);
    let mu_y = filter_valid(&y, w, h, &kernel);
    let m_xx = filter_valid(&xx, w, h, &kernel);
    let m_yy = filter_valid(&yy, w, h, &kernel);
    let m_xy = filter_valid(&xy, w, h, &kernel);
    // fraction of valid pixels per window; 1.0 means fully valid
    let cover = filter_valid(&valid, w, h, &box_kernel);

    let c1 = (0.01 * SSIM_DYNAMIC_RANGE).powi(2);
    let c2 = (0.03 * SSIM_DYNAMIC_RANGE).powi(2);
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..mu_x.len() {
        if cover[i] < 1.0 - 1e-9 {
            continue;
        }
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sx = m_xx[i] - mx * mx;
        let sy = m_yy[i] - my * my;
        let sxy = m_xy[i] - mx * my;
        let s = ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
            / ((mx * mx + my * my + c1) * (sx + sy + c2));
        sum += s;
        count += 1;
    }
    if count == 0 {
        return Err(CoreError::DegenerateInput("every ssim window contains nodata".into()));
    }
    Ok((sum / count as f64).clamp(-1.0, 1.0))
}

/// Root-mean-square per-pixel difference over jointly unmasked pixels.
pub fn rmse<T: Scalar>(a: &RasterTile<T>, b: &RasterTile<T>) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() || a.bands() != b.bands() {
        return Err(CoreError::Alignment("rmse tiles differ in shape".into()));
    }
    let bands = a.bands();
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for p in 0..a.pixel_count() {
        if a.nodata_mask()[p] || b.nodata_mask()[p] {
            continue;
        }
        for bd in 0..bands {
            let d = a.values()[p * bands + bd].to_f64_lossy() - b.values()[p * bands + bd].to_f64_lossy();
            sum += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(CoreError::DegenerateInput("no overlapping valid pixels".into()));
    }
    Ok((sum / count as f64).sqrt())
}

/// Max minus min elevation over unmasked pixels.
pub fn elevation_range<T: Scalar>(dem: &RasterTile<T>) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in dem.band_valid_values(0) {
        let v = v.to_f64_lossy();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return Err(CoreError::DegenerateInput("all-masked DEM tile".into()));
    }
    Ok(hi - lo)
}

fn median_of(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn aggregate_stats(records: &[EvalRecord]) -> Result<AggregateStats> {
    if records.is_empty() {
        return Err(CoreError::InvalidArgument("aggregate over empty record set".into()));
    }
    let mut ssims: Vec<f64> = records.iter().map(|r| r.ssim).collect();
    let mut rmses: Vec<f64> = records.iter().map(|r| r.rmse).collect();
    let n = records.len() as f64;
    let mean_ssim = ssims.iter().sum::<f64>() / n;
    let mean_rmse = rmses.iter().sum::<f64>() / n;
    ssims.sort_by(|a, b| a.partial_cmp(b).expect("finite ssim"));
    rmses.sort_by(|a, b| a.partial_cmp(b).expect("finite rmse"));
    Ok(AggregateStats {
        mean_ssim,
        median_ssim: median_of(&ssims),
        mean_rmse,
        median_rmse: median_of(&rmses),
        count: records.len(),
    })
}

/// 1-D k-means on per-tile elevation range. Cluster ids are relabeled so
/// cluster 0 has the lowest mean range; empty clusters are dropped. Returns
/// the mean range per surviving cluster, ascending.
pub fn cluster_by_elevation_range(
    records: &mut [EvalRecord],
    k: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(CoreError::InvalidArgument("k must be >= 1".into()));
    }
    if records.len() < k {
        return Err(CoreError::InvalidArgument(format!(
            "{} records for k={k} clusters",
            records.len()
        )));
    }
    let values: Vec<f64> = records.iter().map(|r| r.elevation_range).collect();

    // k-means++ seeding in 1-D
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![values[rng.gen_range(0..values.len())]];
    while centers.len() < k {
        let d2: Vec<f64> = values
            .iter()
            .map(|&v| centers.iter().map(|&c| (v - c) * (v - c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        if total == 0.0 {
            // all points coincide with existing centers
            break;
        }
        let mut pick = rng.gen::<f64>() * total;
        let mut idx = 0;
        for (i, &d) in d2.iter().enumerate() {
            pick -= d;
            if pick <= 0.0 {
                idx = i;
                break;
            }
        }
        centers.push(values[idx]);
    }

    let mut assign = vec![0usize; values.len()];
    for _ in 0..300 {
        let mut changed = false;
        for (i, &v) in values.iter().enumerate() {
            let best = centers
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (v - **a).abs().partial_cmp(&(v - **b).abs()).expect("finite range")
                })
                .map(|(j, _)| j)
                .unwrap();
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![(0.0f64, 0usize); centers.len()];
        for (i, &v) in values.iter().enumerate() {
            sums[assign[i]].0 += v;
            sums[assign[i]].1 += 1;
        }
        for (j, c) in centers.iter_mut().enumerate() {
            if sums[j].1 > 0 {
                *c = sums[j].0 / sums[j].1 as f64;
            }
        }
        if !changed {
            break;
        }
    }

    // drop empty clusters, relabel ascending by mean range
    let mut stats: Vec<(usize, f64)> = Vec::new();
    for j in 0..centers.len() {
        let members: Vec<f64> = values
            .iter()
            .zip(&assign)
            .filter(|(_, &a)| a == j)
            .map(|(&v, _)| v)
            .collect();
        if !members.is_empty() {
            stats.push((j, members.iter().sum::<f64>() / members.len() as f64));
        }
    }
    stats.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite means"));
    let relabel: std::collections::HashMap<usize, usize> =
        stats.iter().enumerate().map(|(new, &(old, _))| (old, new)).collect();
    for (rec, &a) in records.iter_mut().zip(&assign) {
        rec.cluster_id = Some(relabel[&a]);
    }
    Ok(stats.iter().map(|&(_, m)| m).collect())
}

/// Uniform-bin histogram of SSIM scores over [-1, 1].
pub fn ssim_histogram(records: &[EvalRecord], bins: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    if bins == 0 {
        return Err(CoreError::InvalidArgument("bins must be >= 1".into()));
    }
    let edges: Vec<f64> = (0..=bins).map(|i| -1.0 + 2.0 * i as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    for r in records {
        let idx = (((r.ssim + 1.0) / 2.0 * bins as f64).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok((edges, counts))
}

pub fn write_eval_csv<P: AsRef<Path>>(path: P, records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["pair_id", "ssim", "rmse", "elevation_range", "cluster_id"])?;
    for r in records {
        w.write_record([
            r.pair_id.clone(),
            format!("{:.9}", r.ssim),
            format!("{:.9}", r.rmse),
            format!("{:.3}", r.elevation_range),
            r.cluster_id.map_or(String::new(), |c| c.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_json<P: AsRef<Path>>(path: P, stats: &AggregateStats) -> Result<()> {
    let mut f = std::fs::File::create(path.as_ref())?;
    serde_json::to_writer_pretty(&mut f, stats)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn write_histogram_csv<P: AsRef<Path>>(path: P, edges: &[f64], counts: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    for (i, &c) in counts.iter().enumerate() {
        w.write_record([edges[i].to_string(), edges[i + 1].to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
