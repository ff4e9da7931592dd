use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::data::{BatchPlan, Language, LayerSelection, Split};
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_THRESHOLD;
use crate::vat::{DivergenceVariant, VatConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Sup,
    Mlvat,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Sup => "sup",
            TrainMode::Mlvat => "mlvat",
        }
    }
}

impl FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sup" => Ok(Self::Sup),
            "mlvat" => Ok(Self::Mlvat),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where unlabeled rows come from besides the unused target training rows.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum UnlabeledSources {
    /// Training sets of every other language in the corpus.
    AllOthers,
    Only(Vec<Language>),
}

impl fmt::Display for UnlabeledSources {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnlabeledSources::AllOthers => f.write_str("all"),
            UnlabeledSources::Only(v) if v.is_empty() => f.write_str("none"),
            UnlabeledSources::Only(v) => {
                let names: Vec<&str> = v.iter().map(Language::as_str).collect();
                f.write_str(&names.join(","))
            }
        }
    }
}

impl FromStr for UnlabeledSources {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::AllOthers),
            "none" | "" => Ok(Self::Only(Vec::new())),
            _ => s
                .split(',')
                .map(|l| l.trim().parse())
                .collect::<Result<Vec<_>>>()
                .map(Self::Only),
        }
    }
}

fn as_display<T: fmt::Display, S: Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn opt_display<T: fmt::Display, S: Serializer>(v: &Option<T>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

/// One training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: TrainMode,
    pub target: Language,
    pub rho: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub divergence: DivergenceVariant,
    pub power_iters: usize,
    pub labeled_batch: usize,
    pub unlabeled_batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub seed: u64,
    pub train_plus_dev: bool,
    pub eval_split: Split,
    /// Evaluate on another language (crosslingual runs); defaults to `target`.
    #[serde(serialize_with = "opt_display")]
    pub eval_language: Option<Language>,
    #[serde(serialize_with = "as_display")]
    pub unlabeled_sources: UnlabeledSources,
    #[serde(serialize_with = "as_display")]
    pub layer: LayerSelection,
    pub threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let vat = VatConfig::default();
        let plan = BatchPlan::default();
        Self {
            mode: TrainMode::Mlvat,
            target: "en".parse().unwrap(),
            rho: 0.10,
            epsilon: vat.epsilon,
            alpha: vat.alpha,
            divergence: vat.divergence,
            power_iters: vat.power_iters,
            labeled_batch: plan.labeled_batch,
            unlabeled_batch: plan.unlabeled_batch,
            epochs: 30,
            lr: 2e-5,
            weight_decay: 0.01,
            dropout: 0.1,
            hidden_dim: 768,
            seed: 1,
            train_plus_dev: false,
            eval_split: Split::Test,
            eval_language: None,
            unlabeled_sources: UnlabeledSources::AllOthers,
            layer: LayerSelection::Last,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

const KEYS: &[&str] = &[
    "mode",
    "target",
    "rho",
    "epsilon",
    "alpha",
    "divergence",
    "power_iters",
    "labeled_batch",
    "unlabeled_batch",
    "epochs",
    "lr",
    "weight_decay",
    "dropout",
    "hidden_dim",
    "seed",
    "train_plus_dev",
    "eval_split",
    "eval_language",
    "unlabeled_sources",
    "layer",
    "threshold",
];

impl RunConfig {
    pub fn vat(&self) -> VatConfig {
        VatConfig {
            epsilon: self.epsilon,
            alpha: self.alpha,
            divergence: self.divergence,
            power_iters: self.power_iters,
        }
    }

    pub fn plan(&self) -> BatchPlan {
        BatchPlan {
            labeled_batch: self.labeled_batch,
            unlabeled_batch: self.unlabeled_batch,
        }
    }

    pub fn eval_language(&self) -> &Language {
        self.eval_language.as_ref().unwrap_or(&self.target)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho must be in (0, 1], got {}", self.rho));
        }
        if self.epochs == 0 || self.hidden_dim == 0 {
            return bad("epochs and hidden_dim must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) || !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("lr must be > 0 and weight_decay >= 0".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return bad(format!("threshold must be in [0, 1), got {}", self.threshold));
        }
        self.plan().validate()?;
        if self.mode == TrainMode::Mlvat {
            self.vat().validate()?;
        }
        Ok(())
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
        }
        match key {
            "mode" => self.mode = value.parse()?,
            "target" => self.target = value.parse()?,
            "rho" => self.rho = p(key, value)?,
            "epsilon" => self.epsilon = p(key, value)?,
            "alpha" => self.alpha = p(key, value)?,
            "divergence" => self.divergence = value.parse()?,
            "power_iters" => self.power_iters = p(key, value)?,
            "labeled_batch" => self.labeled_batch = p(key, value)?,
            "unlabeled_batch" => self.unlabeled_batch = p(key, value)?,
            "epochs" => self.epochs = p(key, value)?,
            "lr" => self.lr = p(key, value)?,
            "weight_decay" => self.weight_decay = p(key, value)?,
            "dropout" => self.dropout = p(key, value)?,
            "hidden_dim" => self.hidden_dim = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "train_plus_dev" => self.train_plus_dev = p(key, value)?,
            "eval_split" => self.eval_split = value.parse()?,
            "eval_language" => {
                self.eval_language = match value {
                    "" | "target" => None,
                    v => Some(v.parse()?),
                }
            }
            "unlabeled_sources" => self.unlabeled_sources = value.parse()?,
            "layer" => self.layer = value.parse()?,
            "threshold" => self.threshold = p(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "mode" => self.mode.to_string(),
            "target" => self.target.to_string(),
            "rho" => self.rho.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "alpha" => self.alpha.to_string(),
            "divergence" => self.divergence.to_string(),
            "power_iters" => self.power_iters.to_string(),
            "labeled_batch" => self.labeled_batch.to_string(),
            "unlabeled_batch" => self.unlabeled_batch.to_string(),
            "epochs" => self.epochs.to_string(),
            "lr" => self.lr.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "dropout" => self.dropout.to_string(),
            "hidden_dim" => self.hidden_dim.to_string(),
            "seed" => self.seed.to_string(),
            "train_plus_dev" => self.train_plus_dev.to_string(),
            "eval_split" => self.eval_split.to_string(),
            "eval_language" => self.eval_language.as_ref().map(|l| l.to_string()).unwrap_or_else(|| "target".into()),
            "unlabeled_sources" => self.unlabeled_sources.to_string(),
            "layer" => self.layer.to_string(),
            "threshold" => self.threshold.to_string(),
            _ => unreachable!("key list and getter out of sync: {key}"),
        }
    }

    /// `key = value` lines, one per field.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k));
        }
        out
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.labeled_batch, c.unlabeled_batch, c.epochs), (8, 24, 30));
        assert_eq!((c.lr, c.weight_decay, c.dropout, c.hidden_dim), (2e-5, 0.01, 0.1, 768));
        assert_eq!((c.epsilon, c.alpha), (0.5, 1.0));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn kv_round_trip() {
        let mut c = RunConfig {
            mode: TrainMode::Sup,
            target: "ar".parse().unwrap(),
            ..RunConfig::default()
        };
        c.rho = 0.25;
        c.divergence = DivergenceVariant::KlPerLabel;
        c.eval_language = Some("es".parse().unwrap());
        c.unlabeled_sources = UnlabeledSources::Only(vec!["en".parse().unwrap(), "es".parse().unwrap()]);
        c.layer = LayerSelection::MeanUpTo(4);
        c.lr = 1.0e-3 / 3.0;
        let back = RunConfig::from_kv(&c.to_kv()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn kv_errors() {
        assert!(RunConfig::from_kv("nope = 1").is_err());
        assert!(RunConfig::from_kv("rho").is_err());
        assert!(RunConfig::from_kv("epochs = many").is_err());
        let c = RunConfig::from_kv("# comment\nrho = 0.5  # half\n\n").unwrap();
        assert_eq!(c.rho, 0.5);
    }

    #[test]
    fn validation() {
        for kv in ["rho = 0", "rho = 1.5", "dropout = 1", "labeled_batch = 0", "epsilon = 0", "epochs = 0"] {
            assert!(RunConfig::from_kv(kv).unwrap().validate().is_err(), "{kv}");
        }
        // VAT settings are ignored for supervised runs.
        assert!(RunConfig::from_kv("mode = sup\nepsilon = 0").unwrap().validate().is_ok());
    }
}
