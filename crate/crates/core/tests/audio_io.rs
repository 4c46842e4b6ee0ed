use proptest::prelude::*;
use spoken_digits::audio::{read_wav, resample, write_wav, AudioClip};
use spoken_digits::Error;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pcm16_round_trip_within_one_step(
        samples in prop::collection::vec(-1.0f64..=1.0, 1..400),
        rate in prop::sample::select(vec![8000u32, 16000, 22050, 44100]),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.wav");
        let clip = AudioClip::new(samples.clone(), rate);
        write_wav(&clip, &path).unwrap();
        let back = read_wav(&path).unwrap();
        prop_assert_eq!(back.sample_rate(), rate);
        prop_assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(back.samples()) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn resample_length_and_constants(
        len in 1usize..2000,
        value in -0.9f64..0.9,
        from in prop::sample::select(vec![8000u32, 16000, 44100, 48000]),
        to in prop::sample::select(vec![8000u32, 16000, 22050, 44100]),
    ) {
        let clip = AudioClip::new(vec![value; len], from);
        let out = resample(&clip, to).unwrap();
        let expected = ((len as f64 * to as f64 / from as f64).round() as usize).max(1);
        prop_assert_eq!(out.len(), expected);
        prop_assert_eq!(out.sample_rate(), to);
        prop_assert!(out.samples().iter().all(|s| (s - value).abs() < 1e-12));
    }
}

#[test]
fn same_rate_resample_is_identity() {
    let clip = AudioClip::new((0..500).map(|i| (i as f64 * 0.01).sin() * 0.5).collect(), 16000);
    assert_eq!(resample(&clip, 16000).unwrap(), clip);
}

#[test]
fn missing_and_garbage_files() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.wav");
    assert!(matches!(read_wav(&missing), Err(Error::FileNotFound(_))));
    let garbage = dir.path().join("bad.wav");
    std::fs::write(&garbage, b"definitely not RIFF data").unwrap();
    assert!(read_wav(&garbage).is_err());
}

#[test]
fn out_of_range_samples_are_clamped() {
    let clip = AudioClip::new(vec![1.5, -2.0, 0.25], 8000);
    assert_eq!(clip.samples(), &[1.0, -1.0, 0.25]);
}
