//! Command-line surface. Every subcommand writes only below `--out` and
//! finishes by recording `run.json` (command line, resolved configuration,
//! seed and SHA-256 of every artifact it wrote).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::audio::{read_wav, resample};
use crate::augment::{augment_dataset, preprocess};
use crate::dataset::{generate_synthetic_corpus, scan_directory, validate_manifest, DatasetManifest, Origin};
use crate::error::{Error, Result};
use crate::eval::{
    confusion_csv, cross_val_summary_json, cross_validate, curve_csv, evaluate, fold_json, metrics_json,
};
use crate::features::{feature_csv, save_feature_record, MfccExtractor};
use crate::model::{build_model, load_checkpoint, save_checkpoint, train, Sample};
use crate::pipeline::{featurize_manifest, samples_for, split_manifest, PipelineConfig};

/// Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
#[derive(Parser, Debug)]
#[command(name = "spoken-digits", version, about = "Spoken digit recognition pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic tone corpus under <out>/corpus.
    Synth {
        #[arg(long, default_value_t = 20)]
        per_class: usize,
    },
    /// Build a manifest from <root>/<label>/*.wav.
    Scan { root: PathBuf },
    /// Check a manifest's files, labels and paths.
    Validate { manifest: PathBuf },
    /// Copy the corpus into <out>/corpus and add augmented clips.
    Augment {
        manifest: PathBuf,
        #[arg(long)]
        multiplier: Option<usize>,
    },
    /// Write one feature record per manifest entry.
    Featurize {
        manifest: PathBuf,
        /// Also write a CSV dump of every feature map.
        #[arg(long)]
        debug_csv: bool,
    },
    /// Split, train and write a checkpoint.
    Train {
        manifest: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on the test split (or every original clip).
    Evaluate {
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        all: bool,
    },
    /// Stratified k-fold cross-validation over the original clips.
    Crossval {
        manifest: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Classify one WAV file and print the result as JSON.
    Predict {
        wav: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Summarize the metrics found in a results directory.
    Report { dir: PathBuf },
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Run {
    out: PathBuf,
    config: PipelineConfig,
    artifacts: Vec<PathBuf>,
}

impl Run {
    fn write(&mut self, rel: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.artifacts.push(path.clone());
        Ok(path)
    }

    fn track(&mut self, path: PathBuf) {
        self.artifacts.push(path);
    }

    fn write_json(&mut self, rel: impl AsRef<Path>, value: &serde_json::Value) -> Result<PathBuf> {
        self.write(rel, serde_json::to_string_pretty(value)? + "\n")
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    DatasetManifest::load(path)
}

fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    let mut config = match &cli.common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    match &cli.command {
        Command::Augment { multiplier, .. } => config.multiplier = multiplier.unwrap_or(config.multiplier),
        Command::Train { epochs, .. } => config.epochs = epochs.unwrap_or(config.epochs),
        Command::Crossval { k, epochs, .. } => {
            config.k_folds = k.unwrap_or(config.k_folds);
            config.epochs = epochs.unwrap_or(config.epochs);
        }
        _ => {}
    }
    config.validate()?;
    fs::create_dir_all(&cli.common.out)?;
    let mut run = Run {
        out: cli.common.out.clone(),
        config,
        artifacts: Vec::new(),
    };
    let name = dispatch(&cli.command, &mut run)?;

    let mut hashes = BTreeMap::new();
    for path in &run.artifacts {
        let rel = path.strip_prefix(&run.out).unwrap_or(path);
        hashes.insert(rel.to_string_lossy().replace('\\', "/"), sha256_file(path)?);
    }
    let record = json!({
        "command": name,
        "args": args,
        "seed": run.config.seed,
        "config": run.config,
        "artifacts": hashes,
    });
    fs::write(run.out.join("run.json"), serde_json::to_string_pretty(&record)? + "\n")?;
    Ok(())
}

fn dispatch(command: &Command, run: &mut Run) -> Result<&'static str> {
    let cfg = run.config.clone();
    match command {
        Command::Synth { per_class } => {
            let corpus = run.out.join("corpus");
            let manifest = generate_synthetic_corpus(&corpus, *per_class, cfg.seed)?;
            for e in &manifest.entries {
                run.track(manifest.resolve(e));
            }
            let path = run.out.join("manifest.json");
            manifest.save(&path)?;
            run.track(path);
            println!("wrote {} clips to {}", manifest.len(), corpus.display());
            Ok("synth")
        }
        Command::Scan { root } => {
            if !root.is_dir() {
                return Err(Error::FileNotFound(root.clone()));
            }
            let manifest = scan_directory(root)?;
            let path = run.out.join("manifest.json");
            manifest.save(&path)?;
            run.track(path);
            println!("{} entries", manifest.len());
            Ok("scan")
        }
        Command::Validate { manifest } => {
            let m = load_manifest(manifest)?;
            let report = validate_manifest(&m);
            let problems: Vec<serde_json::Value> =
                report.problems.iter().map(serde_json::to_value).collect::<serde_json::Result<_>>()?;
            run.write_json(
                "validation.json",
                &json!({ "checked": report.checked, "problems": problems }),
            )?;
            for p in &problems {
                eprintln!("{p}");
            }
            println!("checked {} entries, {} problems", report.checked, report.problems.len());
            if report.is_clean() {
                Ok("validate")
            } else {
                Err(Error::InvalidData(format!("{} manifest problems", report.problems.len())))
            }
        }
        Command::Augment { manifest, .. } => {
            let src = load_manifest(manifest)?;
            let corpus = run.out.join("corpus");
            let mut mirrored = DatasetManifest {
                root: corpus.clone(),
                ..src.clone()
            };
            mirrored.entries.retain(|e| e.origin == Origin::Original);
            for e in &mirrored.entries {
                let dst = corpus.join(&e.path);
                if let Some(parent) = dst.parent() {
                    fs::create_dir_all(parent)?;
                }
                let from = src.resolve(e);
                if !from.exists() {
                    return Err(Error::FileNotFound(from));
                }
                if from != dst {
                    fs::copy(&from, &dst)?;
                }
            }
            let augmented = augment_dataset(&mirrored, &cfg.augment())?;
            for e in &augmented.entries {
                run.track(augmented.resolve(e));
            }
            let path = run.out.join("manifest.json");
            augmented.save(&path)?;
            run.track(path);
            println!("{} entries ({} augmented)", augmented.len(), augmented.len() - mirrored.len());
            Ok("augment")
        }
        Command::Featurize { manifest, debug_csv } => {
            let m = load_manifest(manifest)?;
            let maps = featurize_manifest(&m, &cfg)?;
            let mut index = Vec::with_capacity(maps.len());
            for (i, (entry, map)) in m.entries.iter().zip(&maps).enumerate() {
                let rel = format!("features/{i:05}.sdfm");
                let path = run.out.join(&rel);
                fs::create_dir_all(path.parent().unwrap())?;
                save_feature_record(map, &path)?;
                run.track(path);
                if *debug_csv {
                    run.write(format!("features/{i:05}.csv"), feature_csv(map))?;
                }
                index.push(json!({
                    "path": entry.path,
                    "label": entry.label,
                    "origin": entry.origin,
                    "feature": rel,
                }));
            }
            run.write_json("features/index.json", &json!({ "root": m.root, "entries": index }))?;
            println!("featurized {} clips", maps.len());
            Ok("featurize")
        }
        Command::Train { manifest, .. } => {
            let m = load_manifest(manifest)?;
            let maps = featurize_manifest(&m, &cfg)?;
            let split = split_manifest(&m, &cfg)?;
            let tr = samples_for(&m, &maps, &split.train);
            let va = samples_for(&m, &maps, &split.val);
            let mut model = build_model(&cfg.model(), cfg.seed)?;
            let report = train(&mut model, &tr, &va, &cfg.train())?;
            let ckpt = run.out.join("model.sdck");
            save_checkpoint(&model, &ckpt)?;
            run.track(ckpt);
            run.write("history.csv", curve_csv(&report.history))?;
            run.write_json("split.json", &serde_json::to_value(&split)?)?;
            run.write_json("config.json", &serde_json::to_value(&cfg)?)?;
            run.write_json(
                "train_report.json",
                &json!({
                    "best_epoch": report.best_epoch,
                    "stopped_early": report.stopped_early,
                    "epochs_run": report.history.len(),
                    "train_samples": tr.len(),
                    "val_samples": va.len(),
                    "parameters": model.parameter_count(),
                }),
            )?;
            if let Some(last) = report.history.last() {
                println!(
                    "trained {} epochs; best epoch {:?}; final train loss {:.4}",
                    report.history.len(),
                    report.best_epoch,
                    last.train_loss
                );
            }
            Ok("train")
        }
        Command::Evaluate { manifest, model, all } => {
            let m = load_manifest(manifest)?;
            let model = load_checkpoint(model)?;
            let idx: Vec<usize> = if *all {
                (0..m.len()).filter(|&i| m.entries[i].origin == Origin::Original).collect()
            } else {
                split_manifest(&m, &cfg)?.test
            };
            let sub = m.subset(&idx);
            let maps = featurize_manifest(&sub, &cfg)?;
            let all_idx: Vec<usize> = (0..sub.len()).collect();
            let test = samples_for(&sub, &maps, &all_idx);
            let report = evaluate(&model, &test, model.config.classes)?;
            run.write("confusion.csv", confusion_csv(&report.confusion, &m.label_names))?;
            run.write_json("metrics.json", &metrics_json(&report, &m.label_names))?;
            println!("accuracy {:.2}% on {} clips", report.accuracy, test.len());
            Ok("evaluate")
        }
        Command::Crossval { manifest, .. } => {
            let m = load_manifest(manifest)?;
            let originals: Vec<usize> = (0..m.len()).filter(|&i| m.entries[i].origin == Origin::Original).collect();
            let sub = m.subset(&originals);
            let maps = featurize_manifest(&sub, &cfg)?;
            let all_idx: Vec<usize> = (0..sub.len()).collect();
            let samples: Vec<Sample> = samples_for(&sub, &maps, &all_idx);
            let cv = cross_validate(&samples, cfg.k_folds, &cfg.model(), &cfg.train(), cfg.cv_val_fraction)?;
            for fold in &cv.folds {
                run.write_json(format!("folds/fold_{:02}.json", fold.fold), &fold_json(fold, &m.label_names))?;
                run.write(format!("folds/fold_{:02}_history.csv", fold.fold), curve_csv(&fold.history))?;
            }
            run.write_json("crossval.json", &cross_val_summary_json(&cv))?;
            println!(
                "{}-fold accuracy {:.2}% +/- {:.2}",
                cv.k, cv.mean_accuracy, cv.std_accuracy
            );
            Ok("crossval")
        }
        Command::Predict { wav, model } => {
            let model = load_checkpoint(model)?;
            if !wav.exists() {
                return Err(Error::FileNotFound(wav.clone()));
            }
            let clip = resample(&read_wav(wav)?, cfg.sample_rate)?;
            let clip = preprocess(&clip, &cfg.preprocess())?;
            let map = MfccExtractor::new(&cfg.mfcc(), cfg.sample_rate)?.feature_map(&clip)?;
            let p = model.predict(&map)?;
            let value = json!({
                "file": wav,
                "digit": p.digit,
                "label": crate::dataset::BANGLA_DIGITS.get(p.digit),
                "probabilities": p.probabilities,
            });
            run.write_json("prediction.json", &value)?;
            println!("{}", serde_json::to_string(&value)?);
            Ok("predict")
        }
        Command::Report { dir } => {
            let text = render_report(dir)?;
            run.write("report.md", &text)?;
            print!("{text}");
            Ok("report")
        }
    }
}

fn read_json(path: &Path) -> Result<Option<serde_json::Value>> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
}

/// Markdown summary of `metrics.json`, `crossval.json` and `history.csv`
/// found in `dir`.
pub fn render_report(dir: &Path) -> Result<String> {
    if !dir.is_dir() {
        return Err(Error::FileNotFound(dir.to_path_buf()));
    }
    let mut out = String::from("# Results\n");
    let mut found = false;
    if let Some(m) = read_json(&dir.join("metrics.json"))? {
        found = true;
        out.push_str(&format!("\nOverall accuracy: {}% over {} clips\n\n", m["overall_accuracy"], m["total"]));
        out.push_str("| class | accuracy | precision | recall | F1 |\n|---|---|---|---|---|\n");
        for c in m["per_class"].as_array().into_iter().flatten() {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                c["label"].as_str().unwrap_or("?"),
                c["accuracy"],
                c["precision"],
                c["recall"],
                c["f1"]
            ));
        }
        let mac = &m["macro"];
        out.push_str(&format!(
            "| macro | {} | {} | {} | {} |\n",
            mac["accuracy"], mac["precision"], mac["recall"], mac["f1"]
        ));
    }
    if let Some(cv) = read_json(&dir.join("crossval.json"))? {
        found = true;
        out.push_str(&format!(
            "\n{}-fold cross-validation: {}% (std {})\n",
            cv["k"], cv["mean_accuracy"], cv["std_accuracy"]
        ));
    }
    let history = dir.join("history.csv");
    if history.exists() {
        found = true;
        let text = fs::read_to_string(&history)?;
        let rows = text.lines().count().saturating_sub(1);
        out.push_str(&format!("\nTraining curve: {rows} epochs"));
        if let Some(last) = text.lines().last().filter(|_| rows > 0) {
            out.push_str(&format!(" (last row: {last})"));
        }
        out.push('\n');
    }
    if !found {
        return Err(Error::InvalidData(format!("no results found in {}", dir.display())));
    }
    Ok(out)
}
