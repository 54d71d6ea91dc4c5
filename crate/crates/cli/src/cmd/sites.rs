//! Site mining: zero-cloud cells -> buffered candidate regions -> mini-batch
//! k-means -> one representative site per cluster.

use rgb2dem_core::seed::derive_seed;
use rgb2dem_core::sites::{
    buffer_site, extract_zero_cloud_sites, minibatch_kmeans, select_representative_sites,
    write_sites_csv, write_sites_json, CloudFractionGrid, SiteCandidate,
};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub fn run(config: &PipelineConfig) -> Result<()> {
    let grid_path = config.sites.cloud_grid.as_ref().ok_or_else(|| {
        CliError::Config("sites.cloud_grid must point at a cloud-fraction CSV".into())
    })?;
    let grid = CloudFractionGrid::from_csv(grid_path)?;
    let centers = extract_zero_cloud_sites(&grid)?;
    if centers.is_empty() {
        return Err(CliError::Data("no zero-cloud cells in the grid".into()));
    }
    let candidates: Vec<SiteCandidate> = centers
        .iter()
        .map(|&center| {
            Ok(SiteCandidate {
                center,
                region: buffer_site(center, config.sites.buffer_degrees)?,
                cluster_id: None,
            })
        })
        .collect::<Result<_>>()?;

    let k = config.sites.k.min(centers.len());
    let seed = derive_seed(config.root_seed, "sites/kmeans");
    let model = minibatch_kmeans(&centers, k, config.sites.batch_size, seed)?;
    let selected = select_representative_sites(&model, &candidates)?;

    let dir = config.report_dir();
    std::fs::create_dir_all(&dir)?;
    write_sites_csv(dir.join("sites.csv"), &selected)?;
    write_sites_json(dir.join("sites.json"), &selected)?;
    println!(
        "sites: {} zero-cloud cells -> {} representative sites (k = {k})",
        centers.len(),
        selected.len()
    );
    Ok(())
}
