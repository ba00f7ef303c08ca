use nalgebra::Vector3;
use openbox3d::geometry::r_y;
use openbox3d::{decode, encode, fuse_score, Box3D, CameraModel, ConfidenceTarget};

fn main() -> openbox3d::Result<()> {
    let camera = CameraModel::new(720.0, 720.0, 640.0, 360.0, 1280, 720)?;
    let gt = Box3D::new(Vector3::new(1.5, 0.4, 14.0), Vector3::new(1.9, 1.6, 4.5), r_y(2.2))?;
    let box2d = camera.project_box(&gt, 0.1).expect("box in front of the camera");

    let enc = encode(&gt, &box2d, &camera)?;
    println!("encoding: {:.4?}", enc.0);
    let back = decode(&enc, &box2d, &camera)?;
    println!("center error {:.2e} m", (back.center() - gt.center()).norm());

    // a prediction 0.5 m too far away
    let mut noisy = enc;
    noisy.0[2] += 0.035;
    let pred = decode(&noisy, &box2d, &camera)?;
    let t = ConfidenceTarget::for_match(&pred, &gt);
    println!("depth {:.2} m vs {:.2} m, confidence target {t:?}", pred.center().z, gt.center().z);
    println!("fused score for s2d 0.8, s3d 0.6: {:.2}", fuse_score(0.8, 0.6));
    Ok(())
}
