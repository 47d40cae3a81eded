//! Render a synthetic plate photo, analyze it, and compare against the
//! ground truth it was rendered from.

use colorpicker::fixtures::{corpus_item, CorpusSpec};
use colorpicker::scene::{well_name, SceneConfig};
use colorpicker::vision;

fn main() {
    let spec = CorpusSpec::default();
    let (image, truth) = corpus_item(&spec, 42, 0);
    let out = std::env::temp_dir().join("colorpicker_plate.ppm");
    std::fs::write(&out, image.to_ppm()).unwrap();
    println!("wrote {}", out.display());

    let analysis = vision::analyze(&image, &SceneConfig::default()).expect("plate found");
    println!("marker {:?}", analysis.marker);
    println!("{} well centers fitted", analysis.grid.centers.len());

    let mut worst = 0u8;
    let mut filled = 0;
    for (i, (reading, expected)) in analysis.wells.iter().zip(&truth.wells).enumerate() {
        let (Some(got), Some(want)) = (reading.color, expected) else { continue };
        filled += 1;
        let err = got.channels().iter().zip(want.channels()).map(|(a, b)| a.abs_diff(b)).max().unwrap();
        worst = worst.max(err);
        if i < 4 {
            println!("{:>3} read {:?} truth {:?}", well_name(i), got, want);
        }
    }
    println!("{filled} filled wells, worst channel error {worst}");
}
