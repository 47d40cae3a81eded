//! Writes a labelled synthetic image corpus for vision testing.
//!
//! `cargo run --example corpus -- out_dir [count] [seed]`

use colorpicker::fixtures::generate_vision_corpus;
use std::path::PathBuf;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = args.next().map_or_else(|| std::env::temp_dir().join("colorpicker_corpus"), PathBuf::from);
    let count = args.next().map_or(10, |s| s.parse().expect("count"));
    let seed = args.next().map_or(1, |s| s.parse().expect("seed"));
    let files = generate_vision_corpus(&dir, count, seed).unwrap();
    println!("wrote {} image/truth pairs to {}", files.len(), dir.display());
}
