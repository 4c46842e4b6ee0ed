//! Extract the 39x39 MFCC + delta + delta-delta map from a one-second chord.
use spoken_digits::audio::AudioClip;
use spoken_digits::features::{MfccConfig, MfccExtractor};

fn main() -> spoken_digits::Result<()> {
    let rate = 44_100;
    let samples: Vec<f64> = (0..rate)
        .map(|i| {
            let t = i as f64 / rate as f64;
            0.3 * (2.0 * std::f64::consts::PI * 320.0 * t).sin() + 0.15 * (2.0 * std::f64::consts::PI * 480.0 * t).sin()
        })
        .collect();
    let clip = AudioClip::new(samples, rate);
    let extractor = MfccExtractor::new(&MfccConfig::default(), rate)?;
    let stat = extractor.mfcc(&clip)?;
    println!("static coefficients: {} x {} frames", stat.nrows(), stat.ncols());
    let map = extractor.feature_map(&clip)?;
    let v = map.values();
    println!("feature map: {} x {}", v.nrows(), v.ncols());
    let col: Vec<String> = (0..13).map(|k| format!("{:.2}", v[[k, 19]])).collect();
    println!("middle frame static MFCCs: [{}]", col.join(", "));
    Ok(())
}
