//! Lattices and uniform sampling over the dye simplex `{r >= 0, sum(r) <= 1}`.

use crate::color::{RatioVector, DYE_COUNT};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

/// Every point of the simplex lattice with spacing `1 / resolution`, in
/// lexicographic order of the integer coordinates.
pub fn lattice(resolution: u32) -> Vec<RatioVector> {
    let res = resolution as usize;
    let mut out = Vec::new();
    let mut idx = [0usize; DYE_COUNT];
    loop {
        if idx.iter().sum::<usize>() <= res {
            let v = idx.map(|i| i as f64 / res as f64);
            out.push(RatioVector::clamped(v));
        }
        // odometer increment
        let mut d = DYE_COUNT;
        loop {
            if d == 0 {
                return out;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] <= res {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Number of lattice points, `C(resolution + 4, 4)`.
pub fn lattice_size(resolution: u32) -> usize {
    let n = resolution as usize;
    (1..=DYE_COUNT).fold(1usize, |acc, i| acc * (n + i) / i)
}

/// Draws a point uniformly from the simplex by normalizing five unit
/// exponentials (the fifth is water) and dropping the last.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> RatioVector {
    let e: [f64; DYE_COUNT + 1] = std::array::from_fn(|_| Exp1.sample(rng));
    let total: f64 = e.iter().sum();
    RatioVector::clamped(std::array::from_fn(|i| e[i] / total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_lattice_is_origin_and_vertices() {
        let pts: Vec<_> = lattice(1).iter().map(|r| r.as_array()).collect();
        assert_eq!(pts.len(), 5);
        assert!(pts.contains(&[0.0; 4]));
        for i in 0..4 {
            let mut e = [0.0; 4];
            e[i] = 1.0;
            assert!(pts.contains(&e));
        }
    }

    #[test]
    fn lattice_size_matches_enumeration() {
        for res in 1..8 {
            assert_eq!(lattice(res).len(), lattice_size(res));
        }
        assert_eq!(lattice_size(4), 70);
    }

    #[test]
    fn uniform_samples_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let r = sample_uniform(&mut rng);
            assert!(RatioVector::from_array(r.as_array()).is_ok());
        }
    }
}
