use nalgebra::Vector3;
use openbox3d::eval::{evaluate_sets, nms, Detection, EvalConfig, GroundTruth, MatchMode, NmsConfig};
use openbox3d::geometry::r_y;
use openbox3d::{Box2D, Box3D};

fn gt(id: u64, image: u64, cat: &str, b: Option<Box3D>, b2: Box2D) -> GroundTruth {
    GroundTruth { id, image_id: image, category: cat.into(), ignore3d: b.is_none(), box3d: b, box2d: b2 }
}

fn main() -> openbox3d::Result<()> {
    let car = |x: f64, z: f64| Box3D::new(Vector3::new(x, 0.8, z), Vector3::new(1.8, 1.5, 4.4), r_y(0.2));
    let chair = |x: f64, z: f64| Box3D::axis_aligned(Vector3::new(x, 0.5, z), Vector3::new(0.5, 0.9, 0.5));
    let r = |x1: f64| Box2D::new(x1, 100.0, x1 + 60.0, 160.0);

    let gts = vec![
        gt(1, 1, "car", Some(car(-3.0, 12.0)?), r(100.0)?),
        gt(2, 1, "car", Some(car(4.0, 40.0)?), r(300.0)?),
        gt(3, 1, "chair", None, r(500.0)?),
        gt(4, 2, "chair", Some(chair(0.5, 4.0)?), r(200.0)?),
    ];
    let dets = vec![
        Detection::new(10, 1, "car", car(-2.7, 12.4)?, r(100.0)?, 0.9, 0.7),
        // duplicate of the first car, removed by 2D NMS
        Detection::new(11, 1, "car", car(-2.9, 12.1)?, r(102.0)?, 0.6, 0.5),
        Detection::new(12, 1, "car", car(9.0, 25.0)?, r(420.0)?, 0.7, 0.4),
        // on an ignore region: neither TP nor FP
        Detection::new(13, 1, "chair", chair(2.0, 6.0)?, r(500.0)?, 0.8, 0.3),
        Detection::new(14, 2, "chair", chair(0.52, 4.05)?, r(200.0)?, 0.95, 0.9),
        // below the 2D score floor
        Detection::new(15, 2, "chair", chair(3.0, 5.0)?, r(50.0)?, 0.01, 0.9),
    ];
    let kept = nms(dets, &NmsConfig::default());
    println!("kept after nms: {:?}", kept.iter().map(|d| d.id).collect::<Vec<_>>());

    for mode in [MatchMode::Dist, MatchMode::Iou] {
        let cfg = EvalConfig { mode, ..EvalConfig::default() };
        let res = evaluate_sets(&gts, &kept, &cfg)?;
        print!("{}", res.table());
        for m in res.matches.iter().filter(|m| m.category == "car") {
            println!("  det {} -> {}", m.prediction_id, m.outcomes.join(" "));
        }
        println!();
    }
    Ok(())
}
