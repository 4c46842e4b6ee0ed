//! Apply each augmentation operator to a tone and report what changed.
use spoken_digits::audio::AudioClip;
use spoken_digits::augment::{adjust_volume, mix_noise, speed_tune, time_shift, trim_silence};

fn main() -> spoken_digits::Result<()> {
    let rate = 16_000;
    let mut samples = vec![0.0; 4000];
    samples.extend((0..8000).map(|i| 0.3 * (2.0 * std::f64::consts::PI * 300.0 * i as f64 / rate as f64).sin()));
    samples.extend(vec![0.0; 4000]);
    let clip = AudioClip::new(samples, rate);

    let trimmed = trim_silence(&clip, -40.0, 20.0)?;
    println!("trim_silence: {} -> {} samples", clip.len(), trimmed.len());

    let shifted = time_shift(&clip, 50.0)?;
    let onset = |c: &AudioClip| c.samples().iter().position(|s| s.abs() > 1e-9).unwrap_or(0);
    println!("time_shift +50 ms: onset {} -> {}", onset(&clip), onset(&shifted));

    let fast = speed_tune(&clip, 1.1)?;
    println!("speed_tune 1.1: {} -> {} samples", clip.len(), fast.len());

    let noise = AudioClip::new((0..1000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5).collect(), rate);
    let noisy = mix_noise(&clip, &noise, 10.0)?;
    let residual: f64 = noisy.samples().iter().zip(clip.samples()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        / clip.len() as f64;
    println!("mix_noise 10 dB: measured {:.3} dB", 10.0 * (clip.power() / residual).log10());

    let louder = adjust_volume(&clip, 6.0);
    println!("adjust_volume +6 dB: peak {:.3} -> {:.3}", clip.peak(), louder.peak());
    Ok(())
}
