//! Granger-causal selection of latent series that drive the speed series.
//!
//! Each candidate is tested pairwise: a restricted regression of speed on its
//! own `L` lags is compared with one that adds the candidate's `L` lags, and
//! the F statistic is referred to the F distribution. Bonferroni correction
//! across candidates controls the family-wise error.

mod fdist;
mod ols;

use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use fdist::{f_cdf, f_sf, inc_beta, ln_gamma};
pub use ols::{ols_fit, OlsFit, RANK_TOLERANCE};

pub const DEFAULT_LAG: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum CauseError {
    #[error("shape: {0}")]
    Shape(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("no usable rows: every episode is shorter than {0} steps")]
    Empty(usize),
    #[error("non-positive degrees of freedom ({0})")]
    DegreesOfFreedom(i64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One episode: `latents` is T x k, `speed` has length T.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelEpisode {
    pub latents: Array2<f64>,
    pub speed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPanel {
    pub episodes: Vec<PanelEpisode>,
    pub lag: usize,
}

impl SeriesPanel {
    pub fn new(episodes: Vec<PanelEpisode>, lag: usize) -> Result<Self, CauseError> {
        if lag == 0 {
            return Err(CauseError::Domain("lag must be positive".into()));
        }
        let k = episodes.first().map(|e| e.latents.ncols()).unwrap_or(0);
        for (i, e) in episodes.iter().enumerate() {
            if e.latents.nrows() != e.speed.len() {
                return Err(CauseError::Shape(format!(
                    "episode {i}: {} latent rows, {} speeds",
                    e.latents.nrows(),
                    e.speed.len()
                )));
            }
            if e.latents.ncols() != k {
                return Err(CauseError::Shape(format!("episode {i} has {} series, expected {k}", e.latents.ncols())));
            }
        }
        Ok(Self { episodes, lag })
    }

    pub fn n_series(&self) -> usize {
        self.episodes.first().map(|e| e.latents.ncols()).unwrap_or(0)
    }

    fn usable(&self) -> impl Iterator<Item = &PanelEpisode> {
        let min_len = 2 * self.lag + 1;
        self.episodes.iter().filter(move |e| e.speed.len() >= min_len)
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.lag as u64).to_le_bytes());
        for e in &self.episodes {
            h.update((e.latents.nrows() as u64).to_le_bytes());
            h.update((e.latents.ncols() as u64).to_le_bytes());
            for v in e.latents.iter().chain(&e.speed) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Replace the candidate series with `columns` of themselves, in order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let episodes = self
            .episodes
            .iter()
            .map(|e| PanelEpisode { latents: e.latents.select(ndarray::Axis(1), columns), speed: e.speed.clone() })
            .collect();
        Self { episodes, lag: self.lag }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDesign {
    pub x_restricted: Array2<f64>,
    pub x_unrestricted: Array2<f64>,
    pub y: Array1<f64>,
}

fn restricted_rows(panel: &SeriesPanel) -> Result<(Array2<f64>, Array1<f64>), CauseError> {
    let l = panel.lag;
    let n: usize = panel.usable().map(|e| e.speed.len() - l).sum();
    if n == 0 {
        return Err(CauseError::Empty(2 * l + 1));
    }
    let skipped = panel.episodes.len() - panel.usable().count();
    if skipped > 0 {
        log::warn!("skipped {skipped} episodes shorter than {} steps", 2 * l + 1);
    }
    let mut x = Array2::zeros((n, l + 1));
    let mut y = Array1::zeros(n);
    let mut row = 0;
    for e in panel.usable() {
        for t in l..e.speed.len() {
            x[[row, 0]] = 1.0;
            for j in 1..=l {
                x[[row, j]] = e.speed[t - j];
            }
            y[row] = e.speed[t];
            row += 1;
        }
    }
    Ok((x, y))
}

fn candidate_block(panel: &SeriesPanel, i: usize) -> Array2<f64> {
    let l = panel.lag;
    let n: usize = panel.usable().map(|e| e.speed.len() - l).sum();
    let mut x = Array2::zeros((n, l));
    let mut row = 0;
    for e in panel.usable() {
        for t in l..e.speed.len() {
            for j in 1..=l {
                x[[row, j - 1]] = e.latents[[t - j, i]];
            }
            row += 1;
        }
    }
    x
}

/// Stack the restricted `[1, S_{t-1..t-L}]` and unrestricted (plus
/// `Z_{i,t-1..t-L}`) designs over every valid `t` of every episode.
pub fn build_lagged(panel: &SeriesPanel, i: usize) -> Result<LaggedDesign, CauseError> {
    if i >= panel.n_series() {
        return Err(CauseError::Shape(format!("series {i} out of range ({})", panel.n_series())));
    }
    let (x_restricted, y) = restricted_rows(panel)?;
    let block = candidate_block(panel, i);
    let x_unrestricted =
        ndarray::concatenate(ndarray::Axis(1), &[x_restricted.view(), block.view()]).expect("same rows");
    Ok(LaggedDesign { x_restricted, x_unrestricted, y })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    pub index: usize,
    pub f_stat: f64,
    pub p_value: f64,
    pub rss_restricted: f64,
    pub rss_unrestricted: f64,
    pub n_effective: usize,
    pub df_num: usize,
    pub df_den: usize,
}

fn f_test(
    index: usize,
    restricted: &OlsFit,
    design_u: &Array2<f64>,
    y: &Array1<f64>,
) -> Result<GrangerResult, CauseError> {
    let n = y.len();
    let unrestricted = ols_fit(design_u.view(), y.view())?;
    let df_num = unrestricted.rank.saturating_sub(restricted.rank);
    let df_den = n as i64 - unrestricted.rank as i64;
    if df_den <= 0 {
        return Err(CauseError::DegreesOfFreedom(df_den));
    }
    let rss_r = restricted.rss;
    let base = GrangerResult {
        index,
        f_stat: 0.0,
        p_value: 1.0,
        rss_restricted: rss_r,
        rss_unrestricted: rss_r,
        n_effective: n,
        df_num,
        df_den: df_den as usize,
    };
    if df_num == 0 {
        return Ok(base);
    }
    let rss_u = unrestricted.rss.min(rss_r);
    if rss_u == 0.0 {
        let p_value = if rss_r > 0.0 { 0.0 } else { 1.0 };
        let f_stat = if rss_r > 0.0 { f64::MAX } else { 0.0 };
        return Ok(GrangerResult { f_stat, p_value, rss_unrestricted: 0.0, ..base });
    }
    let f_stat = ((rss_r - rss_u) / df_num as f64) / (rss_u / df_den as f64);
    let p_value = f_sf(f_stat, df_num as f64, df_den as f64)?;
    Ok(GrangerResult { f_stat, p_value, rss_unrestricted: rss_u, ..base })
}

/// Test whether series `i` Granger-causes speed at lag order `panel.lag`.
pub fn granger_test(panel: &SeriesPanel, i: usize) -> Result<GrangerResult, CauseError> {
    let d = build_lagged(panel, i)?;
    let restricted = ols_fit(d.x_restricted.view(), d.y.view())?;
    f_test(i, &restricted, &d.x_unrestricted, &d.y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseSet {
    /// Selected series, ascending.
    pub selected: Vec<usize>,
    /// One result per tested candidate, in index order.
    pub results: Vec<GrangerResult>,
    pub alpha: f64,
    pub correction: String,
    pub lag: usize,
    pub panel_fingerprint: String,
}

impl CauseSet {
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn result(&self, index: usize) -> Option<&GrangerResult> {
        self.results.iter().find(|r| r.index == index)
    }

    /// Selected indices ordered by ascending p value.
    pub fn ranked(&self) -> Vec<usize> {
        let p = |i: usize| self.result(i).map_or(f64::INFINITY, |r| r.p_value);
        let mut r = self.selected.clone();
        r.sort_by(|&a, &b| p(a).total_cmp(&p(b)).then(a.cmp(&b)));
        r
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(&self.selected).expect("indices serialize")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cause set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CauseError> {
        serde_json::from_str(s).map_err(|e| CauseError::Domain(e.to_string()))
    }
}

/// Run a Granger test for every series and keep those with p < alpha / k.
pub fn select_causes(panel: &SeriesPanel, alpha: f64) -> Result<CauseSet, CauseError> {
    let all: Vec<usize> = (0..panel.n_series()).collect();
    select_causes_among(panel, &all, alpha)
}

/// Like [`select_causes`] but only `candidates` are tested, and the
/// Bonferroni divisor is their count.
pub fn select_causes_among(panel: &SeriesPanel, candidates: &[usize], alpha: f64) -> Result<CauseSet, CauseError> {
    let k = panel.n_series();
    if k == 0 || candidates.is_empty() {
        return Err(CauseError::Shape("panel has no candidate series".into()));
    }
    if let Some(&bad) = candidates.iter().find(|&&i| i >= k) {
        return Err(CauseError::Shape(format!("candidate {bad} out of range for {k} series")));
    }
    let mut candidates = candidates.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    let (x_r, y) = restricted_rows(panel)?;
    let restricted = ols_fit(x_r.view(), y.view())?;
    let results = candidates
        .par_iter()
        .map(|&i| {
            let block = candidate_block(panel, i);
            let x_u = ndarray::concatenate(ndarray::Axis(1), &[x_r.view(), block.view()]).expect("same rows");
            f_test(i, &restricted, &x_u, &y)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let threshold = alpha / candidates.len() as f64;
    let selected = results.iter().filter(|r| r.p_value < threshold).map(|r| r.index).collect();
    Ok(CauseSet {
        selected,
        results,
        alpha,
        correction: "bonferroni".into(),
        lag: panel.lag,
        panel_fingerprint: panel.fingerprint(),
    })
}

/// Read a panel from CSV: one column per series, `target` names the speed
/// column, and an optional `episode` column splits rows into episodes.
pub fn read_csv_panel(path: &Path, target: &str, lag: usize) -> Result<(SeriesPanel, Vec<String>), CauseError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let target_col = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| CauseError::Shape(format!("no column named {target}")))?;
    let episode_col = headers.iter().position(|h| h == "episode");
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_col && Some(i) != episode_col)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut episodes = Vec::new();
    let mut current: Option<String> = None;
    let (mut rows, mut speed): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let flush = |rows: &mut Vec<f64>, speed: &mut Vec<f64>, episodes: &mut Vec<PanelEpisode>| {
        if !speed.is_empty() {
            let latents = Array2::from_shape_vec((speed.len(), names.len()), std::mem::take(rows)).expect("row width");
            episodes.push(PanelEpisode { latents, speed: std::mem::take(speed) });
        }
    };
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| {
            rec[i].trim().parse::<f64>().map_err(|e| CauseError::Shape(format!("column {}: {e}", &headers[i])))
        };
        if let Some(ec) = episode_col {
            let id = rec[ec].to_string();
            if current.as_deref() != Some(id.as_str()) {
                flush(&mut rows, &mut speed, &mut episodes);
                current = Some(id);
            }
        }
        for i in 0..rec.len() {
            if i != target_col && Some(i) != episode_col {
                rows.push(parse(i)?);
            }
        }
        speed.push(parse(target_col)?);
    }
    flush(&mut rows, &mut speed, &mut episodes);
    Ok((SeriesPanel::new(episodes, lag)?, names))
}
