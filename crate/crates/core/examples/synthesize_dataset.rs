//! Writes the synthetic two-class set to disk, reloads it, and re-splits it.
//!
//! `cargo run --example synthesize_dataset [out_dir]`

use cfx::dataset::{synthesize, Dataset, SplitRatios, SynthSpec, MANIFEST_FILE};
use cfx::{Label, Split};

fn main() -> cfx::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("cfx_synth"));
    let spec = SynthSpec {
        n_per_class: 50,
        ..SynthSpec::default()
    };
    let manifest = synthesize(&spec, &out)?;
    for ((split, label), n) in manifest.counts() {
        println!("{split:<5} {label:<7} {n}");
    }

    // PNGs are 8-bit, and synthetic pixels are generated on that grid, so a reload is exact.
    let data = Dataset::load(&out.join(MANIFEST_FILE))?;
    let first = &data.samples()[0];
    println!("{} mean pixel {:.4}", first.id, first.image.mean());

    let even = data.resplit(SplitRatios::new(0.5, 0.25, 0.25)?, 11)?;
    println!(
        "after 50/25/25: {} TEST images, {} of them OPACITY",
        even.split(Split::Test).len(),
        even.split_label(Split::Test, Label::Opacity).len()
    );
    println!("written to {}", out.display());
    Ok(())
}
