//! Per-class and macro metrics for a 10-class confusion matrix.
use spoken_digits::dataset::default_label_names;
use spoken_digits::eval::{confusion_csv, metrics_json, ConfusionMatrix, EvalReport};

fn main() -> spoken_digits::Result<()> {
    let counts = vec![
        vec![78, 0, 0, 0, 0, 2, 0, 0, 0, 0],
        vec![0, 80, 0, 0, 0, 0, 0, 0, 0, 0],
        vec![0, 0, 77, 0, 0, 0, 0, 0, 0, 3],
        vec![0, 0, 1, 79, 0, 0, 0, 0, 0, 0],
        vec![0, 0, 0, 1, 76, 0, 1, 2, 0, 0],
        vec![0, 0, 0, 0, 0, 77, 0, 0, 3, 0],
        vec![0, 0, 0, 0, 1, 0, 76, 0, 1, 2],
        vec![0, 0, 0, 0, 1, 0, 0, 78, 1, 0],
        vec![0, 1, 0, 0, 0, 0, 0, 2, 77, 0],
        vec![0, 0, 0, 0, 0, 0, 1, 0, 0, 79],
    ];
    let report = EvalReport::from_confusion(ConfusionMatrix::from_counts(counts)?)?;
    let names = default_label_names();
    print!("{}", confusion_csv(&report.confusion, &names));
    println!("{}", serde_json::to_string_pretty(&metrics_json(&report, &names))?);
    Ok(())
}
