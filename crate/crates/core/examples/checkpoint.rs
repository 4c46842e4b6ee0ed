//! Save a model, load it back and confirm predictions are bit-identical.
use ndarray::Array2;
use spoken_digits::features::FeatureMap;
use spoken_digits::model::{build_model, load_checkpoint, save_checkpoint, ModelConfig};

fn main() -> spoken_digits::Result<()> {
    let model = build_model(&ModelConfig::default(), 42)?;
    let path = std::env::temp_dir().join("spoken_digits_example.sdck");
    save_checkpoint(&model, &path)?;
    let loaded = load_checkpoint(&path)?;
    let inputs: Vec<FeatureMap> = (0..8)
        .map(|k| FeatureMap::new(Array2::from_shape_fn((39, 39), |(i, j)| ((i * 39 + j + k) as f64 * 0.37).sin())))
        .collect::<spoken_digits::Result<_>>()?;
    let refs: Vec<&FeatureMap> = inputs.iter().collect();
    let (a, b) = (model.predict_batch(&refs)?, loaded.predict_batch(&refs)?);
    let identical = a
        .iter()
        .zip(&b)
        .all(|(p, q)| p.probabilities.iter().zip(&q.probabilities).all(|(x, y)| x.to_bits() == y.to_bits()));
    println!(
        "{} bytes written; {} predictions identical after reload: {identical}",
        std::fs::metadata(&path)?.len(),
        a.len()
    );
    Ok(())
}
