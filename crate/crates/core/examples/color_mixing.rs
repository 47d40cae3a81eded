//! Subtractive dye mixing and the two color distances.

use colorpicker::color::{dist_delta_e, dist_euclidean, mix, ColorRgb, DyeSet, RatioVector};

fn main() {
    let dyes = DyeSet::default();
    let target = ColorRgb { r: 120, g: 120, b: 120 };
    let mixes = [
        ("water only", [0.0, 0.0, 0.0, 0.0]),
        ("pure cyan", [1.0, 0.0, 0.0, 0.0]),
        ("cyan + yellow", [0.5, 0.0, 0.5, 0.0]),
        ("a little black", [0.0, 0.0, 0.0, 0.25]),
        ("even split", [0.25, 0.25, 0.25, 0.25]),
    ];
    println!("{:<16} {:>15}  {:>9} {:>8}", "mix", "rgb", "euclid", "deltaE");
    for (label, ratios) in mixes {
        let r = RatioVector::from_array(ratios).expect("ratios on the simplex");
        let c = mix(&r, &dyes);
        println!(
            "{label:<16} {:>15}  {:>9.2} {:>8.2}",
            format!("({}, {}, {})", c.r, c.g, c.b),
            dist_euclidean(&c, &target),
            dist_delta_e(&c, &target)
        );
    }
    // the water share is implied; ratios summing past one are rejected
    println!("{:?}", RatioVector::new(0.6, 0.6, 0.0, 0.0));
}
