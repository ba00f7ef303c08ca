use nalgebra::Vector3;
use openbox3d::io::{sample_eval_split, Annotation, DatasetFile, ImageRecord, SamplerTargets};
use openbox3d::{Box2D, Box3D, CameraModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> openbox3d::Result<()> {
    let camera = CameraModel::new(600.0, 600.0, 320.0, 240.0, 640, 480)?;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut pool = DatasetFile::default();
    let mut next = 0;
    for id in 0..3000u64 {
        let mut im = ImageRecord::from_camera(id, &camera);
        im.source = Some(["COCO", "COCO", "LVIS", "Objects365"][rng.random_range(0..4)].to_string());
        pool.images.push(im);
        for _ in 0..rng.random_range(1..4) {
            let u: f64 = rng.random();
            let cat = format!("c{}", (u * u * 120.0) as u32);
            let z = 2.0 + 150.0 * rng.random::<f64>().powi(3);
            let b = Box3D::axis_aligned(Vector3::new(0.0, 0.0, z), Vector3::repeat(1.0))?;
            next += 1;
            pool.annotations.push(Annotation::with_box(next, id, &cat, &Box2D::new(0.0, 0.0, 40.0, 40.0)?, &b));
        }
    }

    let targets = SamplerTargets { target_images: 400, ..SamplerTargets::default() };
    let r = sample_eval_split(&pool, &targets, 7)?;
    println!(
        "{} images: {} cover, {} fill, {} patch; coverage {:.3}",
        r.images.len(),
        r.cover_count,
        r.fill_count,
        r.patch_count,
        r.category_coverage
    );
    println!("sources {:.3?}", r.source_proportions);
    println!("depth bands {:.3?}", r.depth_proportions);
    println!("rare: {:?}", r.rare_categories);
    Ok(())
}
