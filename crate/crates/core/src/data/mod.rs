//! Dataset ingestion, embedding stores, semi-supervised splits, batching and
//! the synthetic generator.

mod batch;
mod dataset;
mod split;
mod store;
mod synth;

use std::fs;
use std::path::Path;

pub use batch::{BatchPlan, ComposedBatch, EpochState, Pools};
pub use dataset::{
    dataset_file_name, dataset_path, parse_dataset, parse_dataset_str, write_dataset, LabeledRecord, Language, Split,
    EMOTIONS,
};
pub use split::{labeled_count, make_semisup_split, SemiSupSplit};
pub use store::{open_embeddings, EmbeddingStore, LayerSelection, MLVE_VERSION};
pub use synth::{default_label_patterns, domain_language, gen_synthetic, SynthData, SynthSpec};

use crate::error::{Error, Result};

/// File name of the embedding store inside a data directory.
pub const STORE_FILE: &str = "embeddings.mlve";

/// Every record of a data directory plus its embedding store.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub records: Vec<LabeledRecord>,
    pub store: EmbeddingStore,
}

impl Corpus {
    pub fn languages(&self) -> Vec<Language> {
        let mut langs: Vec<Language> = self.records.iter().map(|r| r.language.clone()).collect();
        langs.sort();
        langs.dedup();
        langs
    }

    pub fn n_labels(&self) -> Option<usize> {
        self.records.first().map(|r| r.labels.len())
    }

    pub fn select(&self, language: &Language, split: Split) -> Vec<&LabeledRecord> {
        self.records
            .iter()
            .filter(|r| &r.language == language && r.split == split)
            .collect()
    }

    /// Writes `<language>.<split>.tsv` files and the store into `dir`.
    pub fn write_dir(&self, dir: &Path, label_names: &[String]) -> Result<()> {
        fs::create_dir_all(dir)?;
        for lang in self.languages() {
            for split in Split::ALL {
                let rows: Vec<LabeledRecord> = self.select(&lang, split).into_iter().cloned().collect();
                if !rows.is_empty() {
                    write_dataset(dataset_path(dir, &lang, split), &rows, label_names)?;
                }
            }
        }
        self.store.write(dir.join(STORE_FILE))
    }
}

/// Loads every `<language>.<split>.tsv` in `dir` (sorted by file name) and
/// `embeddings.mlve`. Other files are ignored.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".tsv"))
        .collect();
    names.sort();
    let mut records = Vec::new();
    for name in names {
        let stem = &name[..name.len() - 4];
        let Some((lang, split)) = stem.rsplit_once('.') else { continue };
        let (Ok(language), Ok(split)) = (lang.parse::<Language>(), split.parse::<Split>()) else {
            continue;
        };
        records.extend(parse_dataset(dir.join(&name), &language, split)?);
    }
    if records.is_empty() {
        return Err(Error::Data(format!("no <language>.<split>.tsv files in {}", dir.display())));
    }
    if records.iter().any(|r| r.labels.len() != records[0].labels.len()) {
        return Err(Error::Data("datasets disagree on the number of labels".into()));
    }
    let store = open_embeddings(dir.join(STORE_FILE))?;
    Ok(Corpus { records, store })
}
