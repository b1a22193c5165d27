//! Synthesize a short camera move, lift each frame, drop points the panorama already covers, and fuse.
//!
//! cargo run --example moving_scene_fusion -- [out.ply]

use panoscene::generators::{AnalyticRoom, GeneratorSuite};
use panoscene::geometry::{build_base_cameras, Camera, Pose, Vec3};
use panoscene::io::write_ply;
use panoscene::pointcloud::{filter_moving_scene, fuse, lift_equirect, lift_perspective, SourceTag};

fn main() -> panoscene::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "fused.ply".into());
    let room = AnalyticRoom::new(Vec3::zeros(), 2.5, 11);
    let gen = GeneratorSuite::analytic(room);

    let (pano, pano_depth) = room.render_equirect(256, &Vec3::zeros());
    let panorama = lift_equirect(&pano, &pano_depth, &Vec3::zeros())?;

    let rig = build_base_cameras(20, 60.0, 96, Vec3::zeros())?;
    let start: Camera = rig.base[0];
    let (initial, depth) = room.render_view(&start);
    let trajectory = [Pose::looking(0.3, 0.0, Vec3::new(0.4, 0.0, 0.6))];
    let views = gen.view_synthesizer.synthesize_views(&initial, &trajectory, 6, Some(&depth))?;

    let mut moving = Vec::new();
    for (i, (frame, d)) in views.frames.iter().zip(&views.depths).enumerate() {
        let cloud = lift_perspective(frame, d, SourceTag::Moving(0))?;
        let kept = filter_moving_scene(&cloud, &start);
        println!("frame {i}: {} points lifted, {} outside the initial view", cloud.len(), kept.len());
        moving.push(kept);
    }

    let fused = fuse(&panorama, &moving);
    println!("fused cloud: {} points in runs {:?}", fused.len(), fused.tag_runs());
    write_ply(std::path::Path::new(&out), &fused)?;
    println!("wrote {out}");
    Ok(())
}
