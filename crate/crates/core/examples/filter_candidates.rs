use nalgebra::Vector3;
use openbox3d::filters::{
    edge_contact_ratio, ratio_filters, size_filter, small_object_gate, small_object_upgrade, DatasetClass, SizeSpec,
    UpgradeInputs,
};
use openbox3d::io::parse_size_specs;
use openbox3d::lift::Generator;
use openbox3d::{Box2D, Box3D};

const SPECS: &str = "\
category,shortest_min,shortest_max,middle_min,middle_max,longest_min,longest_max,max_depth_width_ratio,is_flat,is_elongated,fixed_size
car,1.2,1.8,1.5,2.2,3.5,5.5,6.0,false,false,true
poster,0.0,0.05,0.3,1.5,0.4,2.0,50.0,true,false,false
";

fn main() -> openbox3d::Result<()> {
    let specs = parse_size_specs(SPECS.as_bytes())?;
    let car: &SizeSpec = &specs["car"];

    let long_car = Box3D::axis_aligned(Vector3::new(0.0, 0.0, 20.0), Vector3::new(1.8, 1.5, 9.0))?;
    for class in [DatasetClass::Standard, DatasetClass::FineGrained] {
        let v = size_filter(&long_car, Some(car), class);
        println!("9 m car, {class:?}: pass={} failed={:?}", v.passed, v.failed_rules);
    }
    let v = ratio_filters(&long_car, Some(car));
    println!("depth/width {:.2}: pass={}", v.measurements["depth_width_ratio"], v.passed);

    let poster = Box3D::axis_aligned(Vector3::new(0.0, 0.0, 3.0), Vector3::new(0.8, 1.1, 0.005))?;
    let v = size_filter(&poster, Some(&specs["poster"]), DatasetClass::Standard);
    println!("flat poster: pass={} measured {:?}", v.passed, v.measurements.keys().collect::<Vec<_>>());

    let flush = Box2D::new(0.0, 100.0, 50.0, 200.0)?;
    println!("edge contact of a box flush with the left border: {:.3}", edge_contact_ratio(&flush, 640.0, 480.0, 2.0));

    let tiny = Box2D::new(0.0, 0.0, 50.0, 50.0)?;
    let inputs = UpgradeInputs { score: 10, category_ok: true, generator: Generator::RansacPca };
    println!(
        "50x50 in 1000x1000: small={}, upgrade at iou 0.45={}, at 0.55={}",
        small_object_gate(&tiny, 1000.0, 1000.0),
        small_object_upgrade(0.45, &inputs),
        small_object_upgrade(0.55, &inputs)
    );
    Ok(())
}
