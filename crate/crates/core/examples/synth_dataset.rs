use openbox3d::annotate::{annotate_dataset, mask_path, AnnotateConfig};
use openbox3d::io::{read_dataset, synth_scene, write_dataset, write_mask, DatasetFile, SynthSpec};
use std::collections::BTreeMap;

fn main() -> openbox3d::Result<()> {
    let dir = tempfile::tempdir()?;
    let masks = dir.path().join("masks");
    std::fs::create_dir_all(dir.path().join("depth"))?;
    std::fs::create_dir_all(&masks)?;

    let mut d = DatasetFile::default();
    let mut next = 1;
    for k in 0..3u64 {
        let scene = synth_scene(&SynthSpec { seed: 100 + k, box_count: 2, noise_sigma: 0.01, ..SynthSpec::default() })?;
        let (mut image, anns) = scene.to_records(k + 1, next);
        let rel = format!("depth/{}.depth", k + 1);
        scene.depth.write(&dir.path().join(&rel))?;
        image.depth = Some(rel);
        for (a, m) in anns.iter().zip(&scene.masks) {
            write_mask(m, &mask_path(&masks, a.id))?;
        }
        next += anns.len() as u64;
        d.images.push(image);
        d.annotations.extend(anns);
    }
    let path = dir.path().join("dataset.json");
    write_dataset(&path, &d)?;
    let back = read_dataset(&path)?;
    println!("{} images, {} annotations round-tripped", back.images.len(), back.annotations.len());

    let records = annotate_dataset(&back, dir.path(), None, &masks, &BTreeMap::new(), &AnnotateConfig::default())?;
    for r in &records {
        println!(
            "ann {} {:<8} {:?} accepted={} center={:.2?}",
            r.annotation_id, r.category, r.status, r.accepted, r.center
        );
    }
    Ok(())
}
