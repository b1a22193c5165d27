//! Turn a lifted panorama into isotropic Gaussians and render a perspective view.
//!
//! cargo run --release --example splat_render -- [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use panoscene::generators::AnalyticRoom;
use panoscene::geometry::{Camera, CameraIntrinsics, Pose, Vec3};
use panoscene::io::{write_depth_pfm, write_rgb_png};
use panoscene::pointcloud::lift_equirect;
use panoscene::raster::psnr;
use panoscene::splat::{pointcloud_to_gaussians, render_full, RadiusRule};

fn main() -> panoscene::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "splat_out".into()));
    std::fs::create_dir_all(&out)?;

    let room = AnalyticRoom::new(Vec3::zeros(), 1.0, 5);
    let (pano, depth) = room.render_equirect(512, &Vec3::zeros());
    let cloud = lift_equirect(&pano, &depth, &Vec3::zeros())?;

    let row_spacing = std::f64::consts::PI / pano.height as f64;
    let rule = RadiusRule {
        min_std: 0.5 * row_spacing * room.radius,
        ..RadiusRule::default()
    };
    let set = pointcloud_to_gaussians(&cloud, 0.9, &rule)?;
    println!("{} Gaussians", set.len());

    let cam = Camera {
        pose: Pose::looking(0.4, -0.2, Vec3::zeros()),
        intrinsics: CameraIntrinsics::from_fov(60.0, 192, 192)?,
    };
    let t = Instant::now();
    let r = render_full(&set, &cam);
    println!("rendered {}x{} in {:.2?}", r.image.width(), r.image.height(), t.elapsed());

    let (truth, _) = room.render_view(&cam);
    println!("PSNR against the analytic view: {:.1} dB", psnr(&r.image, &truth)?);

    write_rgb_png(&out.join("render.png"), r.image.width(), r.image.height(), &r.image.pixels, &r.image.valid)?;
    write_depth_pfm(&out.join("render_depth.pfm"), &r.depth)?;
    Ok(())
}
