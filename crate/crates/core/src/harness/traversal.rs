use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fewshot::median;
use super::pipeline::HarnessError;
use crate::causesel::CauseSet;
use crate::perception::{traverse, write_pgm_strip, VaeWeights};
use crate::simworld::{agent_region_mask, Observation, RenderConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimVariance {
    pub dim: usize,
    /// Mean per-pixel variance across the sweep inside the agent lane.
    pub on_road: f64,
    pub off_road: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalReport {
    pub values: Vec<f64>,
    pub probes: usize,
    /// Sorted by descending on-road variance.
    pub rows: Vec<DimVariance>,
    pub strips: Vec<String>,
}

impl TraversalReport {
    /// 1-based position of `dim` in the on-road ordering.
    pub fn rank(&self, dim: usize) -> Option<usize> {
        self.rows.iter().position(|r| r.dim == dim).map(|p| p + 1)
    }

    pub fn median_unselected(&self) -> f64 {
        median(&self.rows.iter().filter(|r| !r.selected).map(|r| r.on_road).collect::<Vec<_>>())
    }

    /// Every selected dim has more on-road variance than the median
    /// unselected one.
    pub fn selected_above_median(&self) -> bool {
        let m = self.median_unselected();
        self.rows.iter().filter(|r| r.selected).all(|r| m.is_nan() || r.on_road > m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<5} {:>4} {:>12} {:>12} {:>8}", "rank", "dim", "on-road", "off-road", "cause");
        for (i, r) in self.rows.iter().enumerate() {
            let mark = if r.selected { "*" } else { "" };
            let _ = writeln!(out, "{:<5} {:>4} {:>12.6} {:>12.6} {:>8}", i + 1, r.dim, r.on_road, r.off_road, mark);
        }
        out
    }
}

/// Mean over `pixels` selected by `keep` of the per-pixel variance across `images`.
fn region_variance(images: &[Observation], mask: &[bool], keep: bool) -> f64 {
    let n = images.len() as f64;
    let mut acc = 0.0;
    let mut count = 0usize;
    for p in (0..mask.len()).filter(|&p| mask[p] == keep) {
        let mean = images.iter().map(|o| o.pixels[p]).sum::<f64>() / n;
        acc += images.iter().map(|o| (o.pixels[p] - mean).powi(2)).sum::<f64>() / n;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64
    }
}

/// Sweep every latent of every probe through `values` and tabulate where the
/// decoded images change. With `strip_dir`, one PGM strip per dim is written
/// from the first probe.
pub fn traversal_report(
    vae: &VaeWeights,
    causes: &CauseSet,
    probes: &[Observation],
    values: &[f64],
    render: &RenderConfig,
    strip_dir: Option<&Path>,
) -> Result<TraversalReport, HarnessError> {
    if probes.is_empty() || values.is_empty() {
        return Err(HarnessError::Config("traversal needs probes and values".into()));
    }
    let mask = agent_region_mask(render);
    if mask.len() != probes[0].pixels.len() {
        return Err(HarnessError::Config("render grid does not match the probes".into()));
    }
    if let Some(dir) = strip_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut rows = Vec::with_capacity(vae.latent_dim());
    let mut strips = Vec::new();
    for dim in 0..vae.latent_dim() {
        let (mut on, mut off) = (0.0, 0.0);
        for (i, probe) in probes.iter().enumerate() {
            let strip = traverse(vae, probe, dim, values)?;
            on += region_variance(&strip, &mask, true);
            off += region_variance(&strip, &mask, false);
            if i == 0 {
                if let Some(dir) = strip_dir {
                    let name = format!("traverse_z{dim:02}.pgm");
                    write_pgm_strip(&dir.join(&name), &strip)?;
                    strips.push(name);
                }
            }
        }
        let n = probes.len() as f64;
        rows.push(DimVariance { dim, on_road: on / n, off_road: off / n, selected: causes.selected.contains(&dim) });
    }
    rows.sort_by(|a, b| b.on_road.total_cmp(&a.on_road).then(a.dim.cmp(&b.dim)));
    Ok(TraversalReport { values: values.to_vec(), probes: probes.len(), rows, strips })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{encode, VaeConfig};

    fn causes(selected: Vec<usize>) -> CauseSet {
        CauseSet {
            selected,
            results: Vec::new(),
            alpha: 0.05,
            correction: "bonferroni".into(),
            lag: 3,
            panel_fingerprint: String::new(),
        }
    }

    fn render() -> RenderConfig {
        RenderConfig { grid_side: 8, window_m: 10.0, ..RenderConfig::default() }
    }

    fn vae() -> VaeWeights {
        VaeWeights::init(&VaeConfig { grid_side: 8, latent_dim: 4, hidden: vec![12], ..VaeConfig::default() }).unwrap()
    }

    #[test]
    fn no_op_sweep_has_zero_variance() {
        let w = vae();
        let probe = Observation { side: 8, pixels: (0..64).map(|i| (i % 5) as f64 / 4.0).collect() };
        let mu = encode(&w, &probe);
        let r = traversal_report(&w, &causes(vec![1]), &[probe], &[mu[0]], &render(), None).unwrap();
        assert!(r.rows.iter().all(|d| d.on_road == 0.0 && d.off_road == 0.0));
    }

    #[test]
    fn rows_are_sorted_and_strips_written() {
        let w = vae();
        let dir = tempfile::tempdir().unwrap();
        let probe = Observation::zeros(8);
        let r =
            traversal_report(&w, &causes(vec![2]), &[probe], &[-3.0, 0.0, 3.0], &render(), Some(dir.path())).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r.rows.windows(2).all(|p| p[0].on_road >= p[1].on_road));
        assert_eq!(r.strips.len(), 4);
        assert!(dir.path().join("traverse_z03.pgm").exists());
        assert!(r.rank(2).is_some());
        assert!(r.table().lines().count() == 5);
    }

    #[test]
    fn ranking_rule() {
        let row = |dim, on_road, selected| DimVariance { dim, on_road, off_road: 0.0, selected };
        let mut r = TraversalReport {
            values: vec![0.0],
            probes: 1,
            rows: vec![row(0, 0.5, true), row(1, 0.3, false), row(2, 0.2, false), row(3, 0.1, false)],
            strips: Vec::new(),
        };
        assert!(r.selected_above_median());
        r.rows[2].selected = true;
        assert!(!r.selected_above_median());
    }

    #[test]
    fn rejects_empty_inputs() {
        let w = vae();
        assert!(traversal_report(&w, &causes(vec![0]), &[], &[0.0], &render(), None).is_err());
        assert!(traversal_report(&w, &causes(vec![0]), &[Observation::zeros(4)], &[0.0], &render(), None).is_err());
    }
}
