//! Call generators over HTTP. Without an endpoint argument a throwaway local
//! server answers one panorama depth request.
//!
//! cargo run --example remote_generators -- [endpoint_url]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use base64::Engine;
use panoscene::generators::GeneratorSuite;
use panoscene::io::encode_depth_pfm;
use panoscene::raster::{DepthMap, EquirectImage};

/// Answer a single request with a constant depth map of the given size.
fn spawn_depth_server(width: usize, height: usize, depth: f64) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let addr = listener.local_addr().expect("addr");
    std::thread::spawn(move || {
        let (mut stream, _) = listener.accept().expect("accept");
        let mut reader = BufReader::new(stream.try_clone().expect("clone"));
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).expect("header");
            if line.trim().is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().expect("length");
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).expect("body");

        let map = DepthMap::constant(width, height, depth).expect("depth");
        let pfm = base64::engine::general_purpose::STANDARD.encode(encode_depth_pfm(&map).expect("pfm"));
        let reply = serde_json::json!({ "depth_pfm_b64": pfm }).to_string();
        let _ = write!(
            stream,
            "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
            reply.len()
        );
    });
    format!("http://{addr}")
}

fn main() -> panoscene::Result<()> {
    let pano = EquirectImage::new(64, 32, vec![[0.4, 0.5, 0.6]; 64 * 32], vec![true; 64 * 32])?;
    let endpoint = std::env::args().nth(1).unwrap_or_else(|| spawn_depth_server(64, 32, 2.5));

    let gen = GeneratorSuite::remote(&endpoint, Duration::from_secs(30), 4);
    println!("backends: {:?}", gen.backends());
    match gen.depth_estimator.estimate_pano_depth(&pano) {
        Ok(d) => println!("depth {}x{}, median {:?}", d.width, d.height, d.median()),
        Err(e) => println!("request failed: {e}"),
    }
    Ok(())
}
