//! Assemble a training bundle from an analytic room, export it, and read it back.
//!
//! cargo run --example training_bundle -- [out_dir]

use std::path::PathBuf;

use panoscene::bundle::{TrainingBundle, DEFAULT_STAGE_BOUNDARY};
use panoscene::generators::{AnalyticRoom, GeneratorSuite};
use panoscene::geometry::{build_base_cameras, build_supplementary_cameras, Vec3};
use panoscene::pointcloud::lift_equirect;

fn main() -> panoscene::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "bundle_out".into()));
    let room = AnalyticRoom::new(Vec3::zeros(), 2.0, 21);
    let gen = GeneratorSuite::analytic(room);

    let base = build_base_cameras(12, 60.0, 96, Vec3::zeros())?;
    let cameras = build_supplementary_cameras(&base, 0.1)?;

    let rendered: Vec<_> = cameras.base.iter().map(|c| room.render_view(c)).collect();
    let mut supp_images = Vec::new();
    let mut supp_masks = Vec::new();
    for s in &cameras.supplementary {
        let (img, depth) = &rendered[s.base_index];
        let rel = s.camera.pose.relative_to(&img.pose);
        let (warped, mask) = gen.warp_refiner.warp_refine(img, depth, &rel, &s.camera.intrinsics)?;
        supp_images.push(warped);
        supp_masks.push(mask);
    }

    let (pano, depth) = room.render_equirect(256, &Vec3::zeros());
    let bundle = TrainingBundle {
        base_images: rendered.into_iter().map(|(img, _)| img).collect(),
        supp_images,
        supp_masks,
        moving_cameras: Vec::new(),
        moving_images: Vec::new(),
        points: lift_equirect(&pano, &depth, &Vec3::zeros())?,
        stage_boundary: DEFAULT_STAGE_BOUNDARY,
        cameras,
    };

    let files = bundle.export(&out)?;
    let manifest = bundle.manifest();
    println!(
        "wrote {} files; stage 1 has {} views, {} more join at iteration {}",
        files.len(),
        manifest.stage1.len(),
        manifest.stage2.len(),
        manifest.stage_boundary
    );

    let back = TrainingBundle::read(&out)?;
    println!("read back {} base and {} supplementary views, {} points", back.base_images.len(), back.supp_images.len(), back.points.len());
    Ok(())
}
