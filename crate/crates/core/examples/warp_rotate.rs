//! Rotate a view in place and write the warped image plus the mask left for inpainting.
//!
//! cargo run --example warp_rotate -- [yaw_deg] [out_dir]

use std::path::PathBuf;

use panoscene::generators::AnalyticRoom;
use panoscene::geometry::{yaw_pitch_rotation, Camera, CameraIntrinsics, Pose, Vec3};
use panoscene::io::{write_mask_png, write_rgb_png};
use panoscene::projection::warp_rotate;

fn main() -> panoscene::Result<()> {
    let mut args = std::env::args().skip(1);
    let yaw: f64 = args.next().map_or(30.0, |s| s.parse().expect("yaw"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "warp_out".into()));
    std::fs::create_dir_all(&out)?;

    let room = AnalyticRoom::new(Vec3::zeros(), 3.0, 7);
    let cam = Camera {
        pose: Pose::identity(),
        intrinsics: CameraIntrinsics::from_fov(60.0, 256, 256)?,
    };
    let (src, _) = room.render_view(&cam);

    let (warped, mask) = warp_rotate(&src, &yaw_pitch_rotation(yaw.to_radians(), 0.0));
    println!(
        "yaw {yaw}°: {} of {} pixels need inpainting",
        mask.count(),
        mask.width * mask.height
    );

    write_rgb_png(&out.join("source.png"), src.width(), src.height(), &src.pixels, &src.valid)?;
    write_rgb_png(&out.join("warped.png"), warped.width(), warped.height(), &warped.pixels, &warped.valid)?;
    write_mask_png(&out.join("mask.png"), &mask)?;
    println!("wrote {}", out.display());
    Ok(())
}
