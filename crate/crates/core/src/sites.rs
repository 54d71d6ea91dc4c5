//! Site selection: mine a monthly cloud-fraction grid for fully cloud-free
//! coordinates, buffer them into square regions, and cluster for spatial
//! coverage.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geo::GeoRegion;
use crate::scalar::Scalar;
use crate::tile::RasterTile;

pub const DEFAULT_BUFFER_DEGREES: f64 = 0.135;
/// Nominal SRTM ground resolution for buffered regions.
const DEFAULT_SITE_RESOLUTION: f64 = 30.0;

const KMEANS_TOLERANCE: f64 = 1e-6;
const KMEANS_MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudCell {
    pub lat: f64,
    pub lon: f64,
    pub cloud_fraction: f64,
}

/// Monthly cloud-fraction grid as a flat cell list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloudFractionGrid {
    pub cells: Vec<CloudCell>,
    pub month: Option<u8>,
}

impl CloudFractionGrid {
    pub fn new(cells: Vec<CloudCell>, month: Option<u8>) -> Result<Self> {
        for c in &cells {
            if !(0.0..=1.0).contains(&c.cloud_fraction) {
                return Err(CoreError::InvalidArgument(format!(
                    "cloud fraction {} at ({}, {}) outside [0, 1]",
                    c.cloud_fraction, c.lat, c.lon
                )));
            }
        }
        Ok(Self { cells, month })
    }

    /// Reads a `lat,lon,cloud_fraction` CSV (with header).
    pub fn from_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path.as_ref()).map_err(CoreError::from)?;
        let mut cells = Vec::new();
        for rec in rdr.deserialize::<CloudCell>() {
            cells.push(rec?);
        }
        Self::new(cells, None)
    }

    /// Interprets a single-band raster as a fraction grid, one cell per pixel
    /// center.
    pub fn from_raster<T: Scalar>(tile: &RasterTile<T>) -> Result<Self> {
        if tile.bands() != 1 {
            return Err(CoreError::InvalidArgument("fraction grid raster must be single-band".into()));
        }
        let g = tile.georef;
        let dx = g.lon_span() / tile.width() as f64;
        let dy = g.lat_span() / tile.height() as f64;
        let mut cells = Vec::new();
        for y in 0..tile.height() {
            for x in 0..tile.width() {
                if tile.is_nodata(x, y) {
                    continue;
                }
                cells.push(CloudCell {
                    lat: g.lat_max - (y as f64 + 0.5) * dy,
                    lon: g.lon_min + (x as f64 + 0.5) * dx,
                    cloud_fraction: tile.get(x, y, 0).to_f64_lossy(),
                });
            }
        }
        Self::new(cells, None)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteCandidate {
    pub center: (f64, f64),
    pub region: GeoRegion,
    pub cluster_id: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<(f64, f64)>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Best-so-far inertia per iteration; non-increasing by construction.
    pub inertia_trace: Vec<f64>,
}

/// Returns exactly the cell centers with zero cloud fraction, sorted by
/// (lat, lon).
pub fn extract_zero_cloud_sites(grid: &CloudFractionGrid) -> Result<Vec<(f64, f64)>> {
    if grid.cells.is_empty() {
        return Err(CoreError::EmptyInput("cloud fraction grid has no cells".into()));
    }
    let mut out: Vec<(f64, f64)> = grid
        .cells
        .iter()
        .filter(|c| c.cloud_fraction == 0.0)
        .map(|c| (c.lat, c.lon))
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    Ok(out)
}

/// Buffers a coordinate into the region `[lat - b, lat + b] x [lon - b, lon + b]`.
pub fn buffer_site(center: (f64, f64), buffer: f64) -> Result<GeoRegion> {
    if !center.0.is_finite() || !center.1.is_finite() {
        return Err(CoreError::InvalidArgument("non-finite site center".into()));
    }
    if buffer <= 0.0 {
        return Err(CoreError::InvalidArgument(format!("buffer must be positive, got {buffer}")));
    }
    GeoRegion::new(
        center.0 - buffer,
        center.0 + buffer,
        center.1 - buffer,
        center.1 + buffer,
        DEFAULT_SITE_RESOLUTION,
    )
}

#[inline]
fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dl = a.0 - b.0;
    let dn = a.1 - b.1;
    dl * dl + dn * dn
}

fn nearest_centroid(p: (f64, f64), centroids: &[(f64, f64)]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

fn full_inertia(points: &[(f64, f64)], centroids: &[(f64, f64)]) -> f64 {
    points.iter().map(|&p| nearest_centroid(p, centroids).1).sum()
}

/// Mini-batch k-means in degree space, deterministic per seed.
///
/// Centroids start from a seeded sample of distinct points; each iteration
/// updates centers toward a sampled batch with per-center learning rates
/// 1/count. The model keeps the best centroids seen by full-data inertia, so
/// the recorded trace never increases. Stops when the centroid shift drops
/// below 1e-6 degrees or after 300 iterations.
pub fn minibatch_kmeans(
    points: &[(f64, f64)],
    k: usize,
    batch: usize,
    seed: u64,
) -> Result<ClusterModel> {
    if points.is_empty() {
        return Err(CoreError::EmptyInput("no points to cluster".into()));
    }
    if k == 0 {
        return Err(CoreError::InvalidArgument("k must be >= 1".into()));
    }
    let batch = batch.max(1);

    let mut distinct: Vec<(f64, f64)> = Vec::new();
    for &p in points {
        if !distinct.contains(&p) {
            distinct.push(p);
        }
    }
    let eff_k = k.min(distinct.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    distinct.shuffle(&mut rng);
    let mut centroids: Vec<(f64, f64)> = distinct[..eff_k].to_vec();
    let mut counts = vec![0usize; eff_k];

    let mut best_centroids = centroids.clone();
    let mut best_inertia = full_inertia(points, &centroids);
    let mut trace = vec![best_inertia];

    for _iter in 0..KMEANS_MAX_ITERATIONS {
        let prev = centroids.clone();
        for _ in 0..batch.min(points.len()) {
            let p = points[rng.gen_range(0..points.len())];
            let (idx, _) = nearest_centroid(p, &centroids);
            counts[idx] += 1;
            let eta = 1.0 / counts[idx] as f64;
            centroids[idx].0 += eta * (p.0 - centroids[idx].0);
            centroids[idx].1 += eta * (p.1 - centroids[idx].1);
        }
        let inertia = full_inertia(points, &centroids);
        if inertia < best_inertia {
            best_inertia = inertia;
            best_centroids = centroids.clone();
        }
        trace.push(best_inertia);
        let shift = centroids
            .iter()
            .zip(&prev)
            .map(|(a, b)| dist2(*a, *b).sqrt())
            .fold(0.0f64, f64::max);
        if shift < KMEANS_TOLERANCE {
            break;
        }
    }

    let assignments = points
        .iter()
        .map(|&p| nearest_centroid(p, &best_centroids).0)
        .collect();
    Ok(ClusterModel {
        k,
        centroids: best_centroids,
        assignments,
        inertia: best_inertia,
        inertia_trace: trace,
    })
}

/// Picks, per non-empty cluster, the candidate nearest its centroid; ties go
/// to the lowest (lat, lon).
pub fn select_representative_sites(
    model: &ClusterModel,
    candidates: &[SiteCandidate],
) -> Result<Vec<SiteCandidate>> {
    if model.assignments.len() != candidates.len() {
        return Err(CoreError::Alignment(format!(
            "model fitted on {} points but {} candidates given",
            model.assignments.len(),
            candidates.len()
        )));
    }
    let mut out = Vec::new();
    for (ci, &centroid) in model.centroids.iter().enumerate() {
        let mut best: Option<&SiteCandidate> = None;
        let mut best_d = f64::INFINITY;
        for (i, cand) in candidates.iter().enumerate() {
            if model.assignments[i] != ci {
                continue;
            }
            let d = dist2(cand.center, centroid);
            let better = d < best_d
                || (d == best_d
                    && best.is_some_and(|b| cand.center < b.center));
            if better {
                best_d = d;
                best = Some(cand);
            }
        }
        if let Some(cand) = best {
            let mut chosen = cand.clone();
            chosen.cluster_id = Some(ci);
            out.push(chosen);
        }
    }
    Ok(out)
}

/// Writes candidates as `lat,lon,cluster_id` CSV.
pub fn write_sites_csv<P: AsRef<Path>>(path: P, sites: &[SiteCandidate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["lat", "lon", "cluster_id"])?;
    for s in sites {
        w.write_record([
            s.center.0.to_string(),
            s.center.1.to_string(),
            s.cluster_id.map_or(String::new(), |c| c.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the full candidate records (regions and cluster ids) as JSON.
pub fn write_sites_json<P: AsRef<Path>>(path: P, sites: &[SiteCandidate]) -> Result<()> {
    let mut f = std::fs::File::create(path.as_ref())?;
    serde_json::to_writer_pretty(&mut f, sites)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(cells: &[(f64, f64, f64)]) -> CloudFractionGrid {
        CloudFractionGrid::new(
            cells
                .iter()
                .map(|&(lat, lon, f)| CloudCell { lat, lon, cloud_fraction: f })
                .collect(),
            Some(7),
        )
        .unwrap()
    }

    #[test]
    fn zero_cloud_extraction() {
        let g = grid(&[(1.0, 1.0, 0.0), (2.0, 2.0, 0.0)]);
        assert_eq!(extract_zero_cloud_sites(&g).unwrap().len(), 2);

        let g = grid(&[(1.0, 1.0, 0.1), (2.0, 2.0, 0.9)]);
        assert!(extract_zero_cloud_sites(&g).unwrap().is_empty());

        // mixed: exactly the zero cells, sorted by (lat, lon)
        let g = grid(&[(3.0, 1.0, 0.0), (1.0, 5.0, 0.2), (1.0, 2.0, 0.0), (2.0, 0.0, 0.0)]);
        let sites = extract_zero_cloud_sites(&g).unwrap();
        assert_eq!(sites, vec![(1.0, 2.0), (2.0, 0.0), (3.0, 1.0)]);
    }

    #[test]
    fn grid_rejects_out_of_range_fraction() {
        assert!(CloudFractionGrid::new(
            vec![CloudCell { lat: 0.0, lon: 0.0, cloud_fraction: 1.5 }],
            None
        )
        .is_err());
    }

    #[test]
    fn buffer_site_reference_value() {
        let r = buffer_site((10.0, 20.0), 0.135).unwrap();
        assert!((r.lat_min - 9.865).abs() < 1e-12);
        assert!((r.lat_max - 10.135).abs() < 1e-12);
        assert!((r.lon_min - 19.865).abs() < 1e-12);
        assert!((r.lon_max - 20.135).abs() < 1e-12);
    }

    #[test]
    fn buffer_site_small_and_negative() {
        let r = buffer_site((0.0, 0.0), 0.0005).unwrap();
        assert!((r.lon_span() - 0.001).abs() < 1e-12);

        let r = buffer_site((-5.0, 100.0), 0.135).unwrap();
        assert!((r.lat_min + 5.135).abs() < 1e-12);
        assert!((r.lat_max + 4.865).abs() < 1e-12);
        assert!((r.lon_min - 99.865).abs() < 1e-12);

        assert!(buffer_site((0.0, 0.0), 0.0).is_err());
        assert!(buffer_site((f64::NAN, 0.0), 0.1).is_err());
    }

    #[test]
    fn kmeans_saturated_k() {
        let pts = vec![(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let m = minibatch_kmeans(&pts, 3, 10, 1).unwrap();
        assert_eq!(m.centroids.len(), 3);
        assert!(m.inertia < 1e-9);
    }

    #[test]
    fn kmeans_identical_points() {
        let pts = vec![(2.0, 3.0); 20];
        let m = minibatch_kmeans(&pts, 5, 10, 1).unwrap();
        assert_eq!(m.centroids.len(), 1);
        assert!((m.centroids[0].0 - 2.0).abs() < 1e-12);
        assert!(m.assignments.iter().all(|&a| a == 0));
    }

    /// Full-batch Lloyd's iterated to convergence, the reference for the
    /// two-blob case.
    fn lloyd_oracle(points: &[(f64, f64)], mut centroids: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
        for _ in 0..1000 {
            let mut sums = vec![(0.0, 0.0, 0usize); centroids.len()];
            for &p in points {
                let (i, _) = nearest_centroid(p, &centroids);
                sums[i].0 += p.0;
                sums[i].1 += p.1;
                sums[i].2 += 1;
            }
            let mut shift = 0.0f64;
            for (i, s) in sums.iter().enumerate() {
                if s.2 > 0 {
                    let nc = (s.0 / s.2 as f64, s.1 / s.2 as f64);
                    shift = shift.max(dist2(nc, centroids[i]).sqrt());
                    centroids[i] = nc;
                }
            }
            if shift < 1e-12 {
                break;
            }
        }
        centroids
    }

    #[test]
    fn kmeans_two_blobs_near_blob_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut pts = Vec::new();
        for _ in 0..50 {
            pts.push((rng.gen::<f64>() * 0.5, rng.gen::<f64>() * 0.5));
        }
        for _ in 0..50 {
            pts.push((30.0 + rng.gen::<f64>() * 0.5, 30.0 + rng.gen::<f64>() * 0.5));
        }
        let m = minibatch_kmeans(&pts, 2, 50, 9).unwrap();
        let oracle = lloyd_oracle(&pts, m.centroids.clone());
        for (got, want) in m.centroids.iter().zip(&oracle) {
            assert!(dist2(*got, *want).sqrt() < 0.15, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn kmeans_deterministic_and_monotone_trace() {
        let pts: Vec<(f64, f64)> = (0..60).map(|i| ((i % 7) as f64, (i % 11) as f64)).collect();
        let a = minibatch_kmeans(&pts, 4, 20, 5).unwrap();
        let b = minibatch_kmeans(&pts, 4, 20, 5).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.centroids, b.centroids);
        for w in a.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn kmeans_rejects_bad_args() {
        assert!(minibatch_kmeans(&[], 2, 10, 0).is_err());
        assert!(minibatch_kmeans(&[(0.0, 0.0)], 0, 10, 0).is_err());
    }

    fn candidates_from(points: &[(f64, f64)]) -> Vec<SiteCandidate> {
        points
            .iter()
            .map(|&c| SiteCandidate {
                center: c,
                region: buffer_site(c, 0.135).unwrap(),
                cluster_id: None,
            })
            .collect()
    }

    #[test]
    fn representative_selection() {
        // single cluster, single candidate
        let pts = vec![(1.0, 1.0)];
        let m = minibatch_kmeans(&pts, 1, 10, 3).unwrap();
        let reps = select_representative_sites(&m, &candidates_from(&pts)).unwrap();
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0].center, (1.0, 1.0));
        assert_eq!(reps[0].cluster_id, Some(0));
    }

    #[test]
    fn representative_is_exhaustive_nearest_per_cluster() {
        let pts: Vec<(f64, f64)> = vec![
            (0.0, 0.0), (0.1, 0.0), (0.0, 0.1),
            (50.0, 50.0), (50.1, 50.0), (50.0, 50.1),
            (-50.0, 20.0), (-50.1, 20.0), (-50.0, 20.1),
        ];
        let m = minibatch_kmeans(&pts, 3, 30, 11).unwrap();
        let cands = candidates_from(&pts);
        let reps = select_representative_sites(&m, &cands).unwrap();
        assert_eq!(reps.len(), 3);
        for rep in &reps {
            let ci = rep.cluster_id.unwrap();
            let centroid = m.centroids[ci];
            // exhaustive check: no other member of the cluster is closer
            for (i, cand) in cands.iter().enumerate() {
                if m.assignments[i] == ci {
                    assert!(dist2(rep.center, centroid) <= dist2(cand.center, centroid) + 1e-15);
                }
            }
            // the representative belongs to its own cluster
            let idx = cands.iter().position(|c| c.center == rep.center).unwrap();
            assert_eq!(m.assignments[idx], ci);
        }
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        std::fs::write(&path, "lat,lon,cloud_fraction\n1.0,2.0,0.0\n3.0,4.0,0.5\n").unwrap();
        let g = CloudFractionGrid::from_csv(&path).unwrap();
        assert_eq!(g.cells.len(), 2);
        assert_eq!(extract_zero_cloud_sites(&g).unwrap(), vec![(1.0, 2.0)]);
    }
}
