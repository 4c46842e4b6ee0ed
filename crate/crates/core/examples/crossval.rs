//! Stratified 10-fold cross-validation with a nearest-centroid classifier
//! plugged into the generic harness.
use spoken_digits::dataset::generate_synthetic_corpus;
use spoken_digits::eval::{cross_val_summary_json, cross_validate_with, Trained};
use spoken_digits::features::FeatureMap;
use spoken_digits::pipeline::{featurize_manifest, samples_for, PipelineConfig};

fn main() -> spoken_digits::Result<()> {
    let cfg = PipelineConfig::default();
    let dir = std::env::temp_dir().join("spoken_digits_cv_example");
    let manifest = generate_synthetic_corpus(&dir, 10, 3)?;
    let maps = featurize_manifest(&manifest, &cfg)?;
    let all: Vec<usize> = (0..manifest.len()).collect();
    let samples = samples_for(&manifest, &maps, &all);

    let cv = cross_validate_with(&samples, 10, 3, 10, |_, part, _| {
        let mut centroids = vec![vec![0.0; 39 * 39]; 10];
        let mut counts = [0usize; 10];
        for s in part {
            counts[s.label] += 1;
            for (c, v) in centroids[s.label].iter_mut().zip(s.map.to_vec()) {
                *c += v;
            }
        }
        for (c, n) in centroids.iter_mut().zip(counts) {
            c.iter_mut().for_each(|v| *v /= n.max(1) as f64);
        }
        let classifier = move |m: &FeatureMap| {
            let v = m.to_vec();
            let dist = |c: &Vec<f64>| c.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            (0..10).min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b]))).unwrap()
        };
        Ok(Trained {
            classifier,
            history: Vec::new(),
        })
    })?;
    println!("{}", serde_json::to_string_pretty(&cross_val_summary_json(&cv))?);
    Ok(())
}
