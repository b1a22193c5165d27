//! Build the base camera rig and its supplementary offsets, then save it as JSON.
//!
//! cargo run --example camera_sets -- [count] [fov_deg]

use panoscene::geometry::{build_base_cameras, build_supplementary_cameras, ring_layout, CameraSet, Vec3};

fn main() -> panoscene::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map_or(80, |s| s.parse().expect("count"));
    let fov: f64 = args.next().map_or(60.0, |s| s.parse().expect("fov"));

    for ring in ring_layout(count, fov) {
        println!("ring at {:+6.1}°: {} cameras", ring.elevation_deg, ring.azimuths_deg.len());
    }

    let base = build_base_cameras(count, fov, 512, Vec3::zeros())?;
    let set = build_supplementary_cameras(&base, 0.05)?;
    println!("{} base, {} supplementary", set.base.len(), set.supplementary.len());

    let s = &set.supplementary[0];
    println!(
        "supplementary 0 moves camera {} {:?} to {:?}",
        s.base_index,
        s.direction,
        s.camera.pose.position().as_slice()
    );

    let json = set.to_json()?;
    let back = CameraSet::from_json(&json)?;
    println!("camera set json: {} bytes, round trip exact: {}", json.len(), back == set);
    Ok(())
}
