//! Cross-modal recall@k, compositional queries and the alignment/magnitude diagnostics.

use avloc::bench::{generate_scenes, SceneSpec};
use avloc::retrieval::{
    alignment_magnitude, compositional_retrieve, recall_at_k, Direction, FeatureSource, RetrievalPool,
};

fn main() -> avloc::Result<()> {
    let bench = generate_scenes(&SceneSpec { seed: 4, ..SceneSpec::default() }, 25)?;
    let (mut ids, mut visual, mut audio) = (Vec::new(), Vec::new(), Vec::new());
    for scene in &bench.scenes {
        for s in &scene.sources {
            ids.push(s.id.clone());
            visual.push(scene.box_embedding(&s.bbox));
            audio.push(s.audio.as_slice().to_vec());
        }
    }
    let pool = RetrievalPool::with_ids(ids, visual, audio, FeatureSource::Backbone)?;

    for dir in [Direction::AudioToImage, Direction::ImageToAudio] {
        let r = recall_at_k(&pool, dir, &[1, 5, 10])?;
        println!("{dir:?}: R@1 {:.3} R@5 {:.3} R@10 {:.3}", r.recalls[0], r.recalls[1], r.recalls[2]);
    }

    let (v, a) = (&pool.visual()[0], &pool.audio()[7]);
    for lambda in [0.0, 0.5, 1.0] {
        let top: Vec<_> = compositional_retrieve(&pool, v, a, lambda, 3)?.into_iter().map(|r| r.id).collect();
        println!("lambda {lambda}: {top:?}");
    }

    let report = alignment_magnitude(&pool, false)?;
    println!(
        "alignment {:.3}  magnitude {:.3} +/- {:.3}",
        report.alignment, report.magnitude_mean, report.magnitude_std
    );
    Ok(())
}
