//! Nearest-neighbour concept mining and nine-pair positive sets.

use avloc::bench::{generate_scenes, SceneSpec};
use avloc::kernels::avg_pool;
use avloc::mining::{assemble_pair_batch, build_index, sample_concept, AnchorViews, FeatureStore, MiningConfig, Modality};

fn main() -> avloc::Result<()> {
    let bench = generate_scenes(&SceneSpec { seed: 2, ..SceneSpec::default() }, 12)?;
    let mut store = FeatureStore::default();
    let (mut ids, mut audio, mut pooled, mut anchors) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for scene in &bench.scenes {
        let s = &scene.sources[0];
        store.insert(scene.id.clone(), scene.visual.clone(), s.audio.clone());
        ids.push(scene.id.clone());
        audio.push(s.audio.as_slice().to_vec());
        pooled.push(avg_pool(&scene.visual).into_vec());
        anchors.push(AnchorViews {
            id: scene.id.clone(),
            visual_aug: scene.visual.clone(),
            audio_aug: s.audio.clone(),
            visual_transform: "identity".into(),
            audio_transform: "identity".into(),
        });
    }
    let audio_index = build_index(ids.clone(), &audio, Modality::Audio)?;
    let visual_index = build_index(ids, &pooled, Modality::Visual)?;

    let cfg = MiningConfig { k: 3, seed: 9, ..MiningConfig::default() };
    let query = &bench.scenes[0].id;
    for n in audio_index.top_k(query, cfg.k, cfg.exclude_anchor)? {
        println!("{query} ~ {} ({:.3})", n.id, n.similarity);
    }
    println!("sampled audio concept: {}", sample_concept(&audio_index, query, &cfg)?);

    let batch = assemble_pair_batch(&anchors, &store, &visual_index, &audio_index, &cfg)?;
    println!("{} anchors -> {} positive pairs", batch.len(), batch.pairs().len());
    for p in batch.provenance.iter().take(3) {
        println!("{} visual concept {} audio concept {}", p.anchor, p.visual_concept, p.audio_concept);
    }
    Ok(())
}
