//! Run the panorama loop with stub generators, or composite analytic views directly.
//!
//! cargo run --example panorama_compose -- [out_dir]

use std::path::PathBuf;

use panoscene::generators::{AnalyticRoom, GeneratorSuite};
use panoscene::geometry::{build_base_cameras, Vec3};
use panoscene::io::{write_equirect, write_mask_png};
use panoscene::panorama::{run_panorama_loop, PanoramaPlan};
use panoscene::projection::perspective_to_equirect;

fn main() -> panoscene::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "pano_out".into()));
    std::fs::create_dir_all(&out)?;

    // Generative loop: warp, inpaint, record, then complete the poles.
    let mut plan = PanoramaPlan::new("a quiet reading room with tall windows");
    plan.resolution = 128;
    plan.pano_width = 512;
    plan.superres = false;
    let result = run_panorama_loop(&plan, &GeneratorSuite::stub(3.0))?;
    println!(
        "loop: {} views, {} of {} panorama pixels valid before pole completion",
        result.views.len(),
        result.composed.valid_count(),
        result.composed.width * result.composed.height
    );
    write_equirect(&out.join("loop_panorama.png"), &result.panorama)?;
    write_mask_png(&out.join("pole_mask.png"), &result.pole_mask)?;

    // Plain compositing of known views.
    let room = AnalyticRoom::new(Vec3::zeros(), 2.0, 3);
    let rig = build_base_cameras(40, 60.0, 128, Vec3::zeros())?;
    let views: Vec<_> = rig.base.iter().map(|c| room.render_view(c).0).collect();
    let pano = perspective_to_equirect(&views, 512)?;
    println!("analytic composite: {} of {} pixels valid", pano.valid_count(), pano.width * pano.height);
    write_equirect(&out.join("analytic_panorama.png"), &pano)?;
    Ok(())
}
