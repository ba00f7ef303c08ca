use openbox3d::filters::{filter_candidate, DatasetClass};
use openbox3d::io::{synth_scene, SynthSpec};
use openbox3d::lift::{lift_scene, LiftConfig, SceneCloud};

fn main() -> openbox3d::Result<()> {
    let spec = SynthSpec { box_count: 4, seed: 9, ..SynthSpec::default() };
    let scene = synth_scene(&spec)?;
    let cloud = SceneCloud::from_depth(&scene.depth, &scene.camera)?;
    let objects: Vec<_> = scene.masks.iter().cloned().zip(scene.objects.iter().map(|o| o.box2d)).collect();

    let cfg = LiftConfig::default();
    for (i, (res, truth)) in lift_scene(&cloud, &scene.depth, &objects, &cfg, 1).into_iter().zip(&scene.objects).enumerate() {
        let out = match res {
            Ok(o) => o,
            Err(e) => {
                println!("object {i}: failed: {e}");
                continue;
            }
        };
        let b = out.candidate.bbox;
        let g = truth.bbox.normalized();
        let verdict = filter_candidate(&out.candidate, &truth.box2d, &scene.camera, None, DatasetClass::Standard);
        println!(
            "object {i}: {} pts, grid {}, center err {:.3} m, dims {:.2?} vs {:.2?}, filters pass={} {:?}",
            out.stages.cluster_points,
            out.stages.grid_evaluations,
            (b.center() - g.center()).norm(),
            b.dims().as_slice(),
            g.dims().as_slice(),
            verdict.passed,
            verdict.failed_rules
        );
    }
    Ok(())
}
