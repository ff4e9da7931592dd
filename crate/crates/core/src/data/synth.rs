use serde::{Deserialize, Serialize};

use super::dataset::{Language, LabeledRecord, Split};
use super::store::EmbeddingStore;
use crate::error::{Error, Result};
use crate::numkit::Rng;

/// Parameters of the Gaussian-cluster multilabel generator.
///
/// Each domain holds `n_per_cluster` points per cluster. A point is its
/// cluster center plus its domain offset plus isotropic noise; its labels
/// are the cluster's pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_per_cluster: usize,
    pub dim: usize,
    pub n_labels: usize,
    pub n_clusters: usize,
    /// Explicit centers; drawn from N(0, center_scale^2 I) when absent.
    pub cluster_centers: Option<Vec<Vec<f64>>>,
    pub center_scale: f64,
    /// One binary vector per cluster; see [`default_label_patterns`].
    pub label_patterns: Option<Vec<Vec<u8>>>,
    pub noise_sigma: f64,
    pub domains: usize,
    pub domain_shift_sigma: f64,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_per_cluster: 250,
            dim: 32,
            n_labels: 6,
            n_clusters: 4,
            cluster_centers: None,
            center_scale: 1.0,
            label_patterns: None,
            noise_sigma: 0.5,
            domains: 1,
            domain_shift_sigma: 0.0,
            dev_fraction: 0.1,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Cluster `k` gets primary label `k mod K`. Labels beyond the cluster count
/// are shared by two neighbouring clusters; with fewer labels than clusters
/// each cluster also takes the next label. Either way some label is active
/// in at least two clusters.
pub fn default_label_patterns(n_clusters: usize, n_labels: usize) -> Vec<Vec<u8>> {
    let mut patterns = vec![vec![0u8; n_labels]; n_clusters];
    for (k, p) in patterns.iter_mut().enumerate() {
        p[k % n_labels] = 1;
        if n_labels < n_clusters {
            p[(k + 1) % n_labels] = 1;
        }
    }
    if n_labels >= n_clusters {
        for j in n_clusters..n_labels {
            patterns[j % n_clusters][j] = 1;
            patterns[(j + 1) % n_clusters][j] = 1;
        }
    }
    patterns
}

/// Generated dataset plus the names the TSV writer needs.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub records: Vec<LabeledRecord>,
    pub store: EmbeddingStore,
    pub label_names: Vec<String>,
    pub languages: Vec<Language>,
}

pub fn domain_language(d: usize) -> Language {
    Language::synthetic(format!("d{d}"))
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_per_cluster == 0 || self.dim == 0 || self.n_labels == 0 || self.domains == 0 {
            return bad("sizes must be positive".into());
        }
        if self.n_clusters < 2 {
            return bad("need at least two clusters".into());
        }
        for v in [self.noise_sigma, self.domain_shift_sigma, self.center_scale] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("scale {v} must be finite and >= 0"));
            }
        }
        let fr_ok = |f: f64| (0.0..1.0).contains(&f);
        if !fr_ok(self.dev_fraction) || !fr_ok(self.test_fraction) || self.dev_fraction + self.test_fraction >= 1.0 {
            return bad("dev and test fractions must leave a training share".into());
        }
        if let Some(c) = &self.cluster_centers {
            if c.len() != self.n_clusters || c.iter().any(|v| v.len() != self.dim || v.iter().any(|x| !x.is_finite())) {
                return bad(format!("expected {} finite centers of dim {}", self.n_clusters, self.dim));
            }
        }
        let patterns = self.patterns();
        if patterns.len() != self.n_clusters
            || patterns.iter().any(|p| p.len() != self.n_labels || p.iter().any(|&v| v > 1))
        {
            return bad(format!("expected {} binary label patterns of length {}", self.n_clusters, self.n_labels));
        }
        let shared = (0..self.n_labels).any(|j| patterns.iter().filter(|p| p[j] == 1).count() >= 2);
        if !shared {
            return bad("at least two clusters must share an active label".into());
        }
        Ok(())
    }

    fn patterns(&self) -> Vec<Vec<u8>> {
        self.label_patterns
            .clone()
            .unwrap_or_else(|| default_label_patterns(self.n_clusters, self.n_labels))
    }
}

/// Generates records (language `synthetic-d<i>` per domain) and a
/// single-layer store. Ids are `syn-d<domain>-<index>`.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let patterns = spec.patterns();

    let mut center_rng = root.substream(1);
    let centers = spec.cluster_centers.clone().unwrap_or_else(|| {
        (0..spec.n_clusters)
            .map(|_| (0..spec.dim).map(|_| spec.center_scale * center_rng.normal()).collect())
            .collect()
    });
    let mut shift_rng = root.substream(2);
    let offsets: Vec<Vec<f64>> = (0..spec.domains)
        .map(|_| (0..spec.dim).map(|_| spec.domain_shift_sigma * shift_rng.normal()).collect())
        .collect();

    let mut records = Vec::new();
    let mut store = EmbeddingStore::new(1, spec.dim);
    let n_test = (spec.test_fraction * spec.n_per_cluster as f64).round() as usize;
    let n_dev = (spec.dev_fraction * spec.n_per_cluster as f64).round() as usize;
    for (d, offset) in offsets.iter().enumerate() {
        let language = domain_language(d);
        let mut rng = root.substream(100 + d as u64);
        let mut idx = 0usize;
        for (center, pattern) in centers.iter().zip(&patterns) {
            let mut order: Vec<usize> = (0..spec.n_per_cluster).collect();
            rng.shuffle(&mut order);
            let mut split_of = vec![Split::Train; spec.n_per_cluster];
            for (rank, &i) in order.iter().enumerate() {
                if rank < n_test {
                    split_of[i] = Split::Test;
                } else if rank < n_test + n_dev {
                    split_of[i] = Split::Dev;
                }
            }
            for split in split_of {
                let v: Vec<f32> = center
                    .iter()
                    .zip(offset)
                    .map(|(c, o)| (c + o + spec.noise_sigma * rng.normal()) as f32)
                    .collect();
                let id = format!("syn-d{d}-{idx:05}");
                idx += 1;
                store.push(id.clone(), &v)?;
                records.push(LabeledRecord {
                    id,
                    language: language.clone(),
                    text: None,
                    labels: pattern.clone(),
                    split,
                });
            }
        }
    }
    Ok(SynthData {
        records,
        store,
        label_names: (0..spec.n_labels).map(|j| format!("label{j}")).collect(),
        languages: (0..spec.domains).map(domain_language).collect(),
    })
}
