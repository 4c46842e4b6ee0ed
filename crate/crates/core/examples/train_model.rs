//! Generate a small synthetic corpus, featurize, split, train and evaluate.
use spoken_digits::dataset::generate_synthetic_corpus;
use spoken_digits::eval::evaluate;
use spoken_digits::model::{build_model, train};
use spoken_digits::pipeline::{featurize_manifest, samples_for, split_manifest, PipelineConfig};

fn main() -> spoken_digits::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let dir = std::env::temp_dir().join("spoken_digits_train_example");
    let cfg = PipelineConfig {
        seed: 7,
        epochs,
        ..PipelineConfig::default()
    };
    let manifest = generate_synthetic_corpus(&dir, 10, cfg.seed)?;
    let maps = featurize_manifest(&manifest, &cfg)?;
    let split = split_manifest(&manifest, &cfg)?;
    let tr = samples_for(&manifest, &maps, &split.train);
    let va = samples_for(&manifest, &maps, &split.val);
    let te = samples_for(&manifest, &maps, &split.test);
    let mut model = build_model(&cfg.model(), cfg.seed)?;
    println!("{} parameters; train {} / val {} / test {}", model.parameter_count(), tr.len(), va.len(), te.len());
    let report = train(&mut model, &tr, &va, &cfg.train())?;
    for r in &report.history {
        println!(
            "epoch {:3}  loss {:.4}  acc {:.3}  val_loss {:.4}",
            r.epoch,
            r.train_loss,
            r.train_acc,
            r.val_loss.unwrap_or(f64::NAN)
        );
    }
    let result = evaluate(&model, &te, 10)?;
    println!("best epoch {:?}; test accuracy {:.2}%", report.best_epoch, result.accuracy);
    Ok(())
}
