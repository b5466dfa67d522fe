//! Writes a synthetic benchmark to disk, reads it back through its manifest
//! and evaluates it.

use avloc::bench::{generate_benchmark, SceneSpec};
use avloc::io::{load_pool, load_tensor, LoadedManifest};
use avloc::metrics::{evaluate_interactive, EvalConfig, Variant};
use avloc::retrieval::alignment_magnitude;

fn main() -> avloc::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("avloc-bench"));
    let manifest = generate_benchmark(&SceneSpec { seed: 1, ..SceneSpec::default() }, 10, &dir)?;
    println!("wrote {} entries to {}", manifest.entries.len(), dir.display());

    let first = &manifest.entries[0];
    let tensor = load_tensor(&dir.join(first.visual.as_ref().expect("generated entries carry features")))?;
    println!("{} visual tensor dims {:?}", first.id, tensor.dims());

    let loaded = LoadedManifest::load(&dir.join("manifest.json"))?;
    let report = evaluate_interactive(&loaded.eval_samples()?, Variant::Adaptive, &EvalConfig::default())?;
    println!("{}", report.to_json()?);

    let pool = load_pool(&dir.join("pools/visual.bin"), &dir.join("pools/audio.bin"))?;
    println!("pool alignment {:.3}", alignment_magnitude(&pool, false)?.alignment);
    Ok(())
}
