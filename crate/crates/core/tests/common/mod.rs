#![allow(dead_code)]

use std::path::Path;

use visaid::coordsys::{ImageShape, PixelPoint};
use visaid::datastore::{self, DemoEntry};
use visaid::labelgen::Track;
use visaid::mask::BinaryMask;

pub const WIDTH: u32 = 320;
pub const HEIGHT: u32 = 240;
pub const TINY_MASK_ID: &str = "demo-03";
pub const STATIC_TRACK_ID: &str = "demo-07";

fn square(shape: ImageShape, x0: u32, y0: u32, side: u32) -> BinaryMask {
    BinaryMask::from_fn(shape, |x, y| x >= x0 && x < x0 + side && y >= y0 && y < y0 + side)
}

fn arc_track(i: u32) -> Track {
    let (x0, y0) = (30.0 + 6.0 * f64::from(i), 200.0 - 3.0 * f64::from(i));
    (0..40)
        .map(|f| {
            let t = f64::from(f) / 39.0;
            PixelPoint::new(x0 + 200.0 * t, y0 - 120.0 * t + 30.0 * (std::f64::consts::PI * t).sin())
        })
        .collect()
}

/// Writes a ten-demo corpus: eight usable demos, one whose final mask is a
/// 2×2 blob (`TINY_MASK_ID`) and one whose only track barely moves
/// (`STATIC_TRACK_ID`).
pub fn write_corpus(root: &Path) -> Vec<DemoEntry> {
    let shape = ImageShape::new(WIDTH, HEIGHT).unwrap();
    std::fs::create_dir_all(root.join("masks")).unwrap();
    std::fs::create_dir_all(root.join("tracks")).unwrap();
    let mut entries = Vec::new();
    for i in 0..10u32 {
        let id = format!("demo-{i:02}");
        let mask = if id == TINY_MASK_ID {
            square(shape, 100, 100, 2)
        } else {
            square(shape, 40 + 20 * i, 50 + 3 * i, 16 + 2 * i)
        };
        let tracks: Vec<Track> = if id == STATIC_TRACK_ID {
            vec![(0..40).map(|f| PixelPoint::new(150.0 + 0.1 * f64::from(f % 3), 120.0)).collect()]
        } else {
            vec![vec![PixelPoint::new(10.0, 10.0); 40], arc_track(i)]
        };
        let mask_rel = format!("masks/{id}.png");
        let tracks_rel = format!("tracks/{id}.csv");
        datastore::write_mask_png(&mask, &root.join(&mask_rel)).unwrap();
        datastore::write_tracks_csv(&tracks, &root.join(&tracks_rel)).unwrap();
        entries.push(DemoEntry {
            id,
            instruction: format!("place the block in slot {i}"),
            image: format!("images/{i:02}.png"),
            width: WIDTH,
            height: HEIGHT,
            initial_mask: None,
            final_mask: mask_rel,
            tracks: tracks_rel,
            source: "synthetic".into(),
            episode: i.to_string(),
        });
    }
    datastore::write_jsonl(&entries, &root.join(datastore::DEMO_MANIFEST)).unwrap();
    entries
}
