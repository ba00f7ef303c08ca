use nalgebra::Vector3;
use openbox3d::losses::{
    camera_ray_mse, conf_loss, depth_l1, global_pointmap_alignment, loss_2d, mask_bce, silog, Loss2dConfig, MaskState,
    Presence, ScoredBox2D,
};
use openbox3d::{Box2D, CameraModel, LossReport};

fn show(name: &str, r: &LossReport) {
    let terms: Vec<String> = r.terms.iter().map(|t| format!("{}={:.4}x{}", t.name, t.value, t.weight)).collect();
    let norm = r.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("{name:<10} {:>9.5}  |grad| {norm:.3e}  {}  {:?}", r.value, terms.join(" "), r.flags);
}

fn main() -> openbox3d::Result<()> {
    let gt = [2.0, 4.0, 8.0, 16.0, 0.0];
    let pred = [2.2, 3.5, 9.0, 15.0, 3.0];
    let valid = [true; 5];
    show("silog", &silog(&pred, &gt, &valid)?);
    show("depth_l1", &depth_l1(&pred, &gt, &valid)?);

    let states = [MaskState::Finite, MaskState::Finite, MaskState::Invalid, MaskState::Unknown];
    show("mask_bce", &mask_bce(&[0.9, 0.6, 0.2, 0.5], &states)?);

    let cloud: Vec<Vector3<f64>> = (0..12).map(|i| Vector3::new(i as f64 * 0.3, (i % 4) as f64, 4.0 + (i % 3) as f64)).collect();
    let scaled: Vec<Vector3<f64>> = cloud.iter().map(|p| 0.5 * p + Vector3::new(0.0, 0.1, 0.02 * p.x)).collect();
    show("alignment", &global_pointmap_alignment(&scaled, &cloud, &vec![true; cloud.len()])?);

    let cam = CameraModel::new(500.0, 500.0, 320.0, 240.0, 640, 480)?;
    let off = CameraModel::new(560.0, 540.0, 330.0, 236.0, 640, 480)?;
    show("ray_mse", &camera_ray_mse(&off, &cam, 32, 24));

    show("conf", &conf_loss(&[2.0, -0.5], &[0.8, 0.3], &[-3.0, 1.0, -1.0])?);

    let target = Box2D::new(100.0, 80.0, 220.0, 200.0)?;
    let preds = [
        ScoredBox2D { bbox: Box2D::new(105.0, 90.0, 230.0, 195.0)?, logit: 1.5 },
        ScoredBox2D { bbox: Box2D::new(400.0, 300.0, 450.0, 380.0)?, logit: -2.0 },
    ];
    let presence = [Presence { logit: 3.0, present: true }];
    let cfg = Loss2dConfig { image_width: 640.0, image_height: 480.0 };
    show("2d", &loss_2d(&preds, &[target], &[(0, 0)], &presence, &cfg)?);
    Ok(())
}
