//! Dataset curation: spectral-diversity quality flags, exclusion, split
//! assignment, and SSIM-threshold filtering of the training split.
//!
//! The manifest persists as line-delimited JSON, one entry per line, written
//! with whole-file atomic replace.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geo::GeoRegion;
use crate::scalar::Scalar;
use crate::tile::{RasterTile, ValueDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityFlags {
    /// Per band: fewer distinct 8-bit levels than the threshold.
    pub low_unique_values: Vec<bool>,
    /// One level holds more than the threshold share of all samples.
    pub dominant_value_excess: bool,
    /// Tile had no unmasked pixels at all.
    pub degenerate: bool,
    pub excluded: bool,
}

impl QualityFlags {
    pub fn clean(bands: usize) -> Self {
        Self {
            low_unique_values: vec![false; bands],
            dominant_value_excess: false,
            degenerate: false,
            excluded: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiversityThresholds {
    /// A band is flagged when it has fewer than this many distinct levels.
    pub min_unique_values: usize,
    /// Flag when one level's share of samples strictly exceeds this fraction.
    pub max_dominant_share: f64,
    /// Compute the dominant share per band instead of jointly across bands.
    pub dominant_per_band: bool,
}

impl Default for DiversityThresholds {
    fn default() -> Self {
        Self { min_unique_values: 20, max_dominant_share: 0.20, dominant_per_band: false }
    }
}

/// Flags a stretched RGB tile by pixel-distribution criteria: any band with
/// too few distinct 8-bit levels, or one level dominating more than the
/// threshold share of samples. Excluded = union of both.
pub fn spectral_diversity_flags<T: Scalar>(rgb: &RasterTile<T>) -> Result<QualityFlags> {
    spectral_diversity_flags_with(rgb, &DiversityThresholds::default())
}

pub fn spectral_diversity_flags_with<T: Scalar>(
    rgb: &RasterTile<T>,
    thresholds: &DiversityThresholds,
) -> Result<QualityFlags> {
    if rgb.bands() != 3 {
        return Err(CoreError::InvalidArgument(format!(
            "diversity flags expect a 3-band tile, got {}",
            rgb.bands()
        )));
    }
    rgb.expect_domain(ValueDomain::Jpeg0To255)?;

    if rgb.valid_pixel_count() == 0 {
        return Ok(QualityFlags {
            low_unique_values: vec![true; 3],
            dominant_value_excess: true,
            degenerate: true,
            excluded: true,
        });
    }

    // 8-bit level histogram per band
    let mut hist = [[0usize; 256]; 3];
    let mut total = 0usize;
    for p in 0..rgb.pixel_count() {
        if rgb.nodata_mask()[p] {
            continue;
        }
        total += 1;
        for (b, h) in hist.iter_mut().enumerate() {
            let level = rgb.values()[p * 3 + b].to_f64_lossy().round().clamp(0.0, 255.0) as usize;
            h[level] += 1;
        }
    }

    let low_unique_values: Vec<bool> = hist
        .iter()
        .map(|h| h.iter().filter(|&&c| c > 0).count() < thresholds.min_unique_values)
        .collect();

    let dominant_value_excess = if thresholds.dominant_per_band {
        hist.iter().any(|h| {
            let max = *h.iter().max().unwrap();
            max as f64 / total as f64 > thresholds.max_dominant_share
        })
    } else {
        let mut joint = [0usize; 256];
        for h in &hist {
            for (level, &c) in h.iter().enumerate() {
                joint[level] += c;
            }
        }
        let max = *joint.iter().max().unwrap();
        max as f64 / (total * 3) as f64 > thresholds.max_dominant_share
    };

    let excluded = low_unique_values.iter().any(|&f| f) || dominant_value_excess;
    Ok(QualityFlags { low_unique_values, dominant_value_excess, degenerate: false, excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub rgb_path: PathBuf,
    pub dem_path: PathBuf,
    pub region: GeoRegion,
    pub flags: QualityFlags,
    pub split: Option<Split>,
    pub ssim_score: Option<f64>,
    /// Max minus min ground-truth elevation in meters, recorded at build time.
    pub elevation_range: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.pair_id.as_str()) {
                return Err(CoreError::InvalidArgument(format!(
                    "duplicate pair_id {}",
                    e.pair_id
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Entries that survived quality filtering.
    pub fn usable(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| !e.flags.excluded)
    }

    pub fn split_entries(&self, split: Split) -> Vec<&ManifestEntry> {
        self.usable().filter(|e| e.split == Some(split)).collect()
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        let mut entries = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line)?);
        }
        Self::new(entries)
    }

    /// Atomic whole-file replace: write a sibling temp file, then rename.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("ndjson.tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            for e in &self.entries {
                serde_json::to_writer(&mut f, e)?;
                f.write_all(b"\n")?;
            }
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// Clears split assignment on excluded entries; returns the retained count.
pub fn exclude_flagged_pairs(manifest: &mut DatasetManifest) -> usize {
    let mut retained = 0;
    for e in &mut manifest.entries {
        if e.flags.excluded {
            e.split = None;
        } else {
            retained += 1;
        }
    }
    retained
}

/// Assigns train/val/test splits over usable entries by seeded shuffle.
///
/// `val = round(f_val * n)`, `test = round(f_test * n)`, train takes the
/// remainder.
pub fn split_dataset(
    manifest: &mut DatasetManifest,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<()> {
    let (f_train, f_val, f_test) = fractions;
    if (f_train + f_val + f_test - 1.0).abs() > 1e-9 {
        return Err(CoreError::InvalidArgument(format!(
            "split fractions must sum to 1, got {f_train} + {f_val} + {f_test}"
        )));
    }
    if f_train < 0.0 || f_val < 0.0 || f_test < 0.0 {
        return Err(CoreError::InvalidArgument("negative split fraction".into()));
    }
    let usable: Vec<usize> = manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.flags.excluded)
        .map(|(i, _)| i)
        .collect();
    let n = usable.len();
    if n < 3 {
        return Err(CoreError::InvalidArgument(format!(
            "need at least 3 usable entries to split, have {n}"
        )));
    }
    let (n_val, n_test) = split_counts(n, f_val, f_test);

    let mut order = usable;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    for (rank, &idx) in order.iter().enumerate() {
        manifest.entries[idx].split = Some(if rank < n_val {
            Split::Val
        } else if rank < n_val + n_test {
            Split::Test
        } else {
            Split::Train
        });
    }
    Ok(())
}

/// Rounding rule shared with the documentation: half away from zero.
pub fn split_counts(n: usize, f_val: f64, f_test: f64) -> (usize, usize) {
    let n_val = (f_val * n as f64).round() as usize;
    let n_test = (f_test * n as f64).round() as usize;
    (n_val, n_test)
}

/// Drops train entries whose stage-1 SSIM score is strictly below the
/// threshold; val and test are untouched. Returns the removed entries.
pub fn filter_training_by_ssim(
    manifest: &mut DatasetManifest,
    threshold: f64,
) -> Result<Vec<ManifestEntry>> {
    let unscored: Vec<String> = manifest
        .entries
        .iter()
        .filter(|e| e.split == Some(Split::Train) && e.ssim_score.is_none())
        .map(|e| e.pair_id.clone())
        .collect();
    if !unscored.is_empty() {
        return Err(CoreError::MissingScores(unscored));
    }
    let mut removed = Vec::new();
    manifest.entries.retain(|e| {
        let drop = e.split == Some(Split::Train)
            && e.ssim_score.is_some_and(|s| s < threshold);
        if drop {
            removed.push(e.clone());
        }
        !drop
    });
    Ok(removed)
}

/// Writes an exclusion / refinement audit log as CSV.
pub fn write_audit_csv<P: AsRef<Path>>(path: P, reason: &str, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["pair_id", "reason", "ssim_score", "elevation_range"])?;
    for e in entries {
        w.write_record([
            e.pair_id.clone(),
            reason.to_string(),
            e.ssim_score.map_or(String::new(), |s| s.to_string()),
            e.elevation_range.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Brute-force histogram oracle for the exclusion semantics; test support.
pub fn exclusion_oracle<T: Scalar>(rgb: &RasterTile<T>, thresholds: &DiversityThresholds) -> bool {
    let mut counts: BTreeMap<(usize, u8), usize> = BTreeMap::new();
    let mut total = 0usize;
    for p in 0..rgb.pixel_count() {
        if rgb.nodata_mask()[p] {
            continue;
        }
        total += 1;
        for b in 0..3 {
            let level = rgb.values()[p * 3 + b].to_f64_lossy().round().clamp(0.0, 255.0) as u8;
            *counts.entry((b, level)).or_default() += 1;
        }
    }
    if total == 0 {
        return true;
    }
    let low_unique = (0..3).any(|b| {
        counts.keys().filter(|(bb, _)| *bb == b).count() < thresholds.min_unique_values
    });
    let dominant = if thresholds.dominant_per_band {
        (0..3).any(|b| {
            let max = (0u16..=255)
                .map(|l| counts.get(&(b, l as u8)).copied().unwrap_or(0))
                .max()
                .unwrap();
            max as f64 / total as f64 > thresholds.max_dominant_share
        })
    } else {
        let max = (0u16..=255)
            .map(|l| (0..3).map(|b| counts.get(&(b, l as u8)).copied().unwrap_or(0)).sum::<usize>())
            .max()
            .unwrap();
        max as f64 / (3 * total) as f64 > thresholds.max_dominant_share
    };
    low_unique || dominant
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region() -> GeoRegion {
        GeoRegion::new(0.0, 1.0, 0.0, 1.0, 30.0).unwrap()
    }

    /// 10x10 RGB tile whose band values cycle through `n` distinct levels.
    fn tile_with_unique_counts(n: usize) -> RasterTile<f64> {
        let mut t = RasterTile::filled(10, 10, 3, 0.0, region(), ValueDomain::Jpeg0To255);
        for p in 0..100 {
            for b in 0..3 {
                t.values_mut()[p * 3 + b] = ((p % n) * (255 / n.max(1))) as f64;
            }
        }
        t
    }

    #[test]
    fn unique_value_threshold_boundary() {
        let f19 = spectral_diversity_flags(&tile_with_unique_counts(19)).unwrap();
        assert!(f19.low_unique_values.iter().all(|&b| b));
        assert!(f19.excluded);

        let f20 = spectral_diversity_flags(&tile_with_unique_counts(20)).unwrap();
        assert!(f20.low_unique_values.iter().all(|&b| !b));
    }

    /// Tile where exactly `share_pct` percent of all samples hold one level
    /// and the rest are spread widely.
    fn tile_with_dominant_share(share_pct: f64) -> RasterTile<f64> {
        let mut t = RasterTile::filled(10, 10, 3, 0.0, region(), ValueDomain::Jpeg0To255);
        let total = 300usize;
        let dominant = (share_pct / 100.0 * total as f64).round() as usize;
        let mut i = 0;
        for p in 0..100 {
            for b in 0..3 {
                t.values_mut()[p * 3 + b] = if i < dominant {
                    200.0
                } else {
                    // spread the rest over many levels, avoiding 200
                    ((i * 7) % 199) as f64
                };
                i += 1;
            }
        }
        t
    }

    #[test]
    fn dominant_share_boundary() {
        let at_20 = spectral_diversity_flags(&tile_with_dominant_share(20.0)).unwrap();
        assert!(!at_20.dominant_value_excess, "exactly 20% must not flag");

        let at_21 = spectral_diversity_flags(&tile_with_dominant_share(21.0)).unwrap();
        assert!(at_21.dominant_value_excess);
        assert!(at_21.excluded);
    }

    #[test]
    fn constant_tile_fires_both() {
        let t = RasterTile::filled(10, 10, 3, 128.0, region(), ValueDomain::Jpeg0To255);
        let f = spectral_diversity_flags(&t).unwrap();
        assert!(f.low_unique_values.iter().all(|&b| b));
        assert!(f.dominant_value_excess);
        assert!(f.excluded);
    }

    #[test]
    fn all_masked_tile_is_degenerate() {
        let mut t = RasterTile::filled(4, 4, 3, 100.0, region(), ValueDomain::Jpeg0To255);
        for p in t.nodata_mask_mut() {
            *p = true;
        }
        let f = spectral_diversity_flags(&t).unwrap();
        assert!(f.degenerate);
        assert!(f.excluded);
    }

    #[test]
    fn flags_match_brute_force_oracle() {
        let thresholds = DiversityThresholds::default();
        for n in [3, 19, 20, 40, 120] {
            let t = tile_with_unique_counts(n);
            let f = spectral_diversity_flags(&t).unwrap();
            assert_eq!(f.excluded, exclusion_oracle(&t, &thresholds), "n={n}");
        }
        for pct in [5.0, 19.0, 20.0, 21.0, 60.0] {
            let t = tile_with_dominant_share(pct);
            let f = spectral_diversity_flags(&t).unwrap();
            assert_eq!(f.excluded, exclusion_oracle(&t, &thresholds), "pct={pct}");
        }
    }

    fn entry(id: &str, excluded: bool) -> ManifestEntry {
        let mut flags = QualityFlags::clean(3);
        flags.excluded = excluded;
        ManifestEntry {
            pair_id: id.to_string(),
            rgb_path: format!("{id}_rgb.tif").into(),
            dem_path: format!("{id}_dem.tif").into(),
            region: region(),
            flags,
            split: None,
            ssim_score: None,
            elevation_range: 100.0,
        }
    }

    #[test]
    fn manifest_rejects_duplicate_ids() {
        assert!(DatasetManifest::new(vec![entry("a", false), entry("a", false)]).is_err());
    }

    #[test]
    fn exclusion_clears_split() {
        let mut m = DatasetManifest::new(vec![entry("a", false), entry("b", true)]).unwrap();
        m.entries[1].split = Some(Split::Train);
        let retained = exclude_flagged_pairs(&mut m);
        assert_eq!(retained, 1);
        assert_eq!(m.entries[1].split, None);
        assert_eq!(m.usable().count(), 1);
    }

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_counts(10, 0.1, 0.1), (1, 1));
        assert_eq!(split_counts(12_357, 0.1, 0.1), (1236, 1236));
        assert_eq!(12_357 - 1236 - 1236, 9885);
    }

    #[test]
    fn split_assignment_partitions_and_is_deterministic() {
        let mut m = DatasetManifest::new((0..10).map(|i| entry(&format!("p{i}"), false)).collect::<Vec<_>>()).unwrap();
        split_dataset(&mut m, (0.8, 0.1, 0.1), 99).unwrap();
        assert_eq!(m.split_entries(Split::Train).len(), 8);
        assert_eq!(m.split_entries(Split::Val).len(), 1);
        assert_eq!(m.split_entries(Split::Test).len(), 1);

        let mut m2 = DatasetManifest::new((0..10).map(|i| entry(&format!("p{i}"), false)).collect::<Vec<_>>()).unwrap();
        split_dataset(&mut m2, (0.8, 0.1, 0.1), 99).unwrap();
        assert_eq!(m, m2);

        assert!(split_dataset(&mut m, (0.5, 0.1, 0.1), 1).is_err());
    }

    #[test]
    fn ssim_filter_strict_and_test_preserving() {
        let mut m = DatasetManifest::new(vec![entry("a", false), entry("b", false), entry("c", false), entry("t", false)]).unwrap();
        m.entries[0].split = Some(Split::Train);
        m.entries[0].ssim_score = Some(0.1);
        m.entries[1].split = Some(Split::Train);
        m.entries[1].ssim_score = Some(0.2);
        m.entries[2].split = Some(Split::Train);
        m.entries[2].ssim_score = Some(0.3);
        m.entries[3].split = Some(Split::Test);
        m.entries[3].ssim_score = Some(0.0);

        let removed = filter_training_by_ssim(&mut m, 0.2).unwrap();
        assert_eq!(removed.len(), 1);
        assert_eq!(removed[0].pair_id, "a");
        // 0.2 stays (strict less-than); test entry with score 0.0 stays
        assert_eq!(m.entries.len(), 3);
        assert!(m.entries.iter().any(|e| e.pair_id == "t"));
    }

    #[test]
    fn ssim_filter_monotone_in_threshold() {
        let build = || {
            let mut m = DatasetManifest::new(
                (0..20).map(|i| entry(&format!("p{i}"), false)).collect::<Vec<_>>(),
            )
            .unwrap();
            for (i, e) in m.entries.iter_mut().enumerate() {
                e.split = Some(Split::Train);
                e.ssim_score = Some(i as f64 / 20.0);
            }
            m
        };
        let mut lo = build();
        let removed_lo: HashSet<String> = filter_training_by_ssim(&mut lo, 0.25)
            .unwrap()
            .into_iter()
            .map(|e| e.pair_id)
            .collect();
        let mut hi = build();
        let removed_hi: HashSet<String> = filter_training_by_ssim(&mut hi, 0.6)
            .unwrap()
            .into_iter()
            .map(|e| e.pair_id)
            .collect();
        assert!(removed_lo.is_subset(&removed_hi));
    }

    #[test]
    fn ssim_filter_requires_scores() {
        let mut m = DatasetManifest::new(vec![entry("a", false)]).unwrap();
        m.entries[0].split = Some(Split::Train);
        match filter_training_by_ssim(&mut m, 0.2) {
            Err(CoreError::MissingScores(ids)) => assert_eq!(ids, vec!["a".to_string()]),
            other => panic!("expected MissingScores, got {other:?}"),
        }
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.ndjson");
        let mut m = DatasetManifest::new(vec![entry("a", false), entry("b", true)]).unwrap();
        m.entries[0].split = Some(Split::Train);
        m.entries[0].ssim_score = Some(0.42);
        m.save(&path).unwrap();
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(back, m);
    }
}
