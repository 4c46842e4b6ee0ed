//! Write a tone to 16-bit WAV, read it back and resample it.
use spoken_digits::audio::{read_wav, resample, write_wav, AudioClip};

fn main() -> spoken_digits::Result<()> {
    let rate = 44_100;
    let tone: Vec<f64> = (0..rate)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / rate as f64).sin())
        .collect();
    let clip = AudioClip::new(tone, rate);
    let dir = std::env::temp_dir().join("spoken_digits_audio_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("tone.wav");
    write_wav(&clip, &path)?;
    let back = read_wav(&path)?;
    let max_err = clip
        .samples()
        .iter()
        .zip(back.samples())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("{} samples at {} Hz, max quantization error {max_err:.2e}", back.len(), back.sample_rate());
    let down = resample(&back, 16_000)?;
    println!("resampled to {} Hz: {} samples, {:.1} ms", down.sample_rate(), down.len(), down.duration_ms());
    Ok(())
}
