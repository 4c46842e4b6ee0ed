//! Generate the synthetic tone corpus, rescan it and validate the manifest.
use spoken_digits::dataset::{generate_synthetic_corpus, scan_directory, synthetic_fundamental, validate_manifest};

fn main() -> spoken_digits::Result<()> {
    let dir = std::env::temp_dir().join("spoken_digits_corpus_example");
    let manifest = generate_synthetic_corpus(&dir, 20, 0)?;
    for label in 0..10 {
        println!("class {label}: fundamental {:.0} Hz", synthetic_fundamental(label));
    }
    let scanned = scan_directory(&dir)?;
    let report = validate_manifest(&scanned);
    println!(
        "{} clips generated, {} found by scan, {} problems",
        manifest.len(),
        scanned.len(),
        report.problems.len()
    );
    Ok(())
}
