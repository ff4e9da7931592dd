use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use mlvat::data::{gen_synthetic, load_corpus, open_embeddings, Corpus, SynthSpec};
use mlvat::metrics::MetricReport;
use mlvat::net::save_params;
use mlvat::probe::probe_layers;
use mlvat::trainer::{benchmark_spec, run, run_sweep, summarize, sweep_csv, RunConfig, SweepAxes};
use mlvat::{Error, Result};

use crate::{GenSynthArgs, InspectArgs, ProbeArgs, ReportArgs, RunArgs, SweepArgs, TrainArgs};

const DATA_DIR_ENV: &str = "MLVAT_DATA_DIR";

impl RunArgs {
    fn data_dir(&self) -> Result<PathBuf> {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .ok_or_else(|| Error::Config(format!("no --data-dir given and {DATA_DIR_ENV} is unset")))
    }

    fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(p) = &self.config {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            cfg.apply_kv(&text)?;
        }
        let flags = [
            ("mode", &self.mode),
            ("target", &self.target),
            ("rho", &self.rho),
            ("epsilon", &self.epsilon),
            ("alpha", &self.alpha),
            ("divergence", &self.divergence),
            ("power_iters", &self.power_iters),
            ("labeled_batch", &self.labeled_batch),
            ("unlabeled_batch", &self.unlabeled_batch),
            ("epochs", &self.epochs),
            ("lr", &self.lr),
            ("weight_decay", &self.weight_decay),
            ("dropout", &self.dropout),
            ("hidden_dim", &self.hidden_dim),
            ("seed", &self.seed),
            ("eval_split", &self.eval_split),
            ("eval_language", &self.eval_language),
            ("unlabeled_sources", &self.unlabeled_sources),
            ("layer", &self.layer),
            ("threshold", &self.threshold),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.train_plus_dev {
            cfg.train_plus_dev = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn corpus(&self) -> Result<Corpus> {
        load_corpus(self.data_dir()?)
    }
}

fn append_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    for l in lines {
        writeln!(f, "{l}")?;
    }
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let cfg = a.run.config()?;
    let corpus = a.run.corpus()?;
    let result = run(&cfg, &corpus)?;
    let line = result.to_json_line();
    println!("{line}");
    eprintln!(
        "JI {:.2}  MiF1 {:.2}  MaF1 {:.2}  ({:.1}s)",
        100.0 * result.report.jaccard,
        100.0 * result.report.micro_f1,
        100.0 * result.report.macro_f1,
        result.wall_clock_secs
    );
    if let Some(p) = &a.out {
        append_lines(p, &[line])?;
    }
    if let (Some(p), Some(params)) = (&a.save_params, &result.params) {
        save_params(p, params)?;
    }
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let base = a.run.config()?;
    let axes = SweepAxes {
        modes: a.modes.iter().map(|m| m.parse()).collect::<Result<_>>()?,
        rhos: a.rhos,
        epsilons: a.epsilons,
        alphas: a.alphas,
        divergences: a.divergences.iter().map(|d| d.parse()).collect::<Result<_>>()?,
        ratios: a.ratios,
        seeds: a.seeds,
    };
    let cells = axes.cells(&base);
    for c in &cells {
        c.validate()?;
    }
    let corpus = a.run.corpus()?;
    eprintln!("{} cells, {} jobs", cells.len(), a.jobs.max(1));
    let results = run_sweep(&cells, &corpus, a.jobs)?;
    let lines: Vec<String> = results.iter().map(|r| r.to_json_line()).collect();
    if let Some(p) = &a.out {
        append_lines(p, &lines)?;
    }
    let csv = sweep_csv(&results);
    match &a.csv {
        Some(p) => fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    for g in summarize(&results) {
        eprintln!("{}  n={}  JI {:.2} ± {:.2}", g.key, g.n, 100.0 * g.mean_ji, 100.0 * g.std_ji);
    }
    Ok(())
}

pub fn probe(a: ProbeArgs) -> Result<()> {
    let cfg = a.run.config()?;
    let corpus = a.run.corpus()?;
    let report = probe_layers(&corpus, &cfg, a.jobs)?;
    let csv = report.to_csv();
    match &a.out {
        Some(p) => {
            fs::write(p, &csv)?;
            eprintln!("{}", report.summary_line());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn gen_synth(a: GenSynthArgs) -> Result<()> {
    let spec = if a.benchmark {
        benchmark_spec(a.seed)
    } else {
        SynthSpec {
            n_per_cluster: a.per_cluster,
            dim: a.dim,
            n_labels: a.labels,
            n_clusters: a.clusters,
            cluster_centers: None,
            center_scale: a.center_scale,
            label_patterns: None,
            noise_sigma: a.noise,
            domains: a.domains,
            domain_shift_sigma: a.domain_shift,
            dev_fraction: a.dev_fraction,
            test_fraction: a.test_fraction,
            seed: a.seed,
        }
    };
    let data = gen_synthetic(&spec)?;
    let corpus = Corpus {
        records: data.records,
        store: data.store,
    };
    corpus.write_dir(&a.out, &data.label_names)?;
    eprintln!(
        "wrote {} records ({} domains) and a {}x{}x{} store to {}",
        corpus.records.len(),
        data.languages.len(),
        corpus.store.len(),
        corpus.store.n_layers(),
        corpus.store.dim(),
        a.out.display()
    );
    Ok(())
}

pub fn inspect_store(a: InspectArgs) -> Result<()> {
    let s = open_embeddings(&a.path)?;
    println!("n_sentences = {}", s.len());
    println!("n_layers = {}", s.n_layers());
    println!("dim = {}", s.dim());
    for id in s.ids().iter().take(a.head) {
        println!("id {id}");
    }
    Ok(())
}

/// Groups records by every config field except the seed.
pub fn report(a: ReportArgs) -> Result<()> {
    let mut groups: BTreeMap<String, Vec<MetricReport>> = BTreeMap::new();
    for path in &a.results {
        let text = fs::read_to_string(path)?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |m: String| Error::MalformedRow {
                path: path.clone(),
                row: i + 1,
                reason: m,
            };
            let mut v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let report: MetricReport =
                serde_json::from_value(v["report"].take()).map_err(|e| bad(format!("report: {e}")))?;
            let cfg = v
                .get_mut("config")
                .and_then(|c| c.as_object_mut())
                .ok_or_else(|| bad("missing config".into()))?;
            cfg.remove("seed");
            let key = ["mode", "target", "eval_language", "rho", "epsilon", "alpha", "divergence", "unlabeled_batch"]
                .iter()
                .filter_map(|k| cfg.get(*k).map(|v| format!("{k}={}", v.to_string().trim_matches('"'))))
                .collect::<Vec<_>>()
                .join(" ");
            let full = serde_json::Value::Object(cfg.clone()).to_string();
            groups.entry(format!("{key}\u{0}{full}")).or_default().push(report);
        }
    }
    let mut csv = String::from("group,n,ji_mean,ji_std,mif1_mean,maf1_mean\n");
    println!("{:<60} {:>3} {:>14} {:>6} {:>6}", "group", "n", "JI", "MiF1", "MaF1");
    for (key, reps) in &groups {
        let label = key.split('\u{0}').next().unwrap_or("");
        let n = reps.len() as f64;
        let mean = |f: fn(&MetricReport) -> f64| reps.iter().map(f).sum::<f64>() / n;
        let ji = mean(|r| r.jaccard);
        let sd = if reps.len() > 1 {
            (reps.iter().map(|r| (r.jaccard - ji).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let (mi, ma) = (mean(|r| r.micro_f1), mean(|r| r.macro_f1));
        println!(
            "{label:<60} {:>3} {:>7.2} ± {:<4.2} {:>6.2} {:>6.2}",
            reps.len(),
            100.0 * ji,
            100.0 * sd,
            100.0 * mi,
            100.0 * ma
        );
        csv.push_str(&format!("\"{label}\",{},{ji:.6},{sd:.6},{mi:.6},{ma:.6}\n", reps.len()));
    }
    if let Some(p) = &a.csv {
        fs::write(p, csv)?;
    }
    Ok(())
}
