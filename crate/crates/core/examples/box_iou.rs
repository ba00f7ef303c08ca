use std::f64::consts::FRAC_PI_4;

use nalgebra::Vector3;
use openbox3d::geometry::{monte_carlo_iou3d, r_y};
use openbox3d::{iou3d, Box3D};

fn main() -> openbox3d::Result<()> {
    let a = Box3D::axis_aligned(Vector3::new(0.0, 0.0, 8.0), Vector3::new(1.0, 1.0, 1.0))?;
    let b = a.with_rotation(r_y(FRAC_PI_4));
    let c = Box3D::new(Vector3::new(0.4, 0.1, 8.3), Vector3::new(0.8, 1.2, 2.0), r_y(0.3))?;

    for (name, x, y) in [("cube vs cube at 45 deg", &a, &b), ("cube vs slab", &a, &c)] {
        let mc = monte_carlo_iou3d(x, y, 1_000_000, 1);
        println!("{name}: exact {:.6}, mc {:.4} ± {:.4}", iou3d(x, y), mc.iou, mc.std_err);
    }

    // w > l is swapped and the yaw folded into [0, pi)
    let raw = Box3D::new(Vector3::new(0.0, 0.0, 5.0), Vector3::new(3.0, 1.0, 1.0), r_y(-2.5))?;
    let n = raw.normalized();
    println!("dims {:?} yaw {:.4} -> dims {:?} yaw {:.4}", raw.dims().as_slice(), raw.yaw(), n.dims().as_slice(), n.yaw());
    println!("same occupied volume: iou {:.6}", iou3d(&raw, &n));
    Ok(())
}
