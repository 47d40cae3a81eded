//! A small batch-size sweep: larger batches finish sooner but get less
//! feedback per sample.

use colorpicker::app::{sweep_with, SweepConfig};
use colorpicker::fixtures;

fn main() {
    let base = fixtures::batch_sweep().base;
    let cfg = SweepConfig { base, batch_sizes: vec![1, 8, 64], repeats: 3, first_seed: 1, ..Default::default() };
    let report = sweep_with(&cfg, |r| {
        println!("B={:<3} seed={} best={:?} twh={:.0}s", r.batch_size, r.seed, r.final_best, r.twh_s);
    });
    println!("{}", report.summary_table());
}
