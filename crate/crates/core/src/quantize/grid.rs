use std::fmt;

use crate::error::{Error, Result};

/// Uniform symmetric grid on `[-1, 1]` for `bits`-bit weights.
///
/// Points are `n·ε` with `ε = 1 / (2^(bits-1) - 1)` and
/// `n ∈ -(2^(bits-1) - 1) ..= 2^(bits-1) - 1`, which gives `2^bits - 1`
/// values including `-1`, `0` and `+1`.
///
/// Grid values are always produced as `n / m` (with `m = 1/ε` an integer)
/// so that membership can be tested exactly.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    bits: u32,
    half_levels: i64,
}

impl Grid {
    /// Two bits is the least that can hold a negative value, zero and a positive value.
    pub const MIN_BITS: u32 = 2;
    pub const MAX_BITS: u32 = 32;

    pub fn new(bits: u32) -> Result<Self> {
        if !(Self::MIN_BITS..=Self::MAX_BITS).contains(&bits) {
            return Err(Error::InvalidResolution {
                bits,
                min: Self::MIN_BITS,
                max: Self::MAX_BITS,
            });
        }
        Ok(Self {
            bits,
            half_levels: (1i64 << (bits - 1)) - 1,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Grid spacing ε.
    pub fn spacing(&self) -> f64 {
        1.0 / self.half_levels as f64
    }

    /// `1/ε`, the number of grid steps between 0 and 1.
    pub fn steps_per_unit(&self) -> i64 {
        self.half_levels
    }

    pub fn num_points(&self) -> u64 {
        2 * self.half_levels as u64 + 1
    }

    pub fn lo(&self) -> f64 {
        -1.0
    }

    pub fn hi(&self) -> f64 {
        1.0
    }

    /// The value `n·ε`. Not clipped: `|n|` may exceed the grid's range.
    pub fn point(&self, n: i64) -> f64 {
        if n == 0 {
            0.0
        } else {
            n as f64 / self.half_levels as f64
        }
    }

    /// Index `n` such that `point(n) == x`, if `x` is exactly a grid value in `[-1, 1]`.
    pub fn index_of(&self, x: f64) -> Option<i64> {
        if !x.is_finite() || x.abs() > 1.0 {
            return None;
        }
        let n = (x * self.half_levels as f64).round() as i64;
        (self.point(n) == x).then_some(n)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.index_of(x).is_some()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (-self.half_levels..=self.half_levels).map(|n| self.point(n))
    }

    /// `|a| / ε`, snapped to the nearest integer when within a few ulps of it.
    ///
    /// Grid values survive the round trip `n/m·m` only up to rounding error;
    /// without the snap an on-grid weight could acquire a spurious fractional
    /// part and move under randomized rounding.
    pub(crate) fn scaled_magnitude(&self, a: f64) -> f64 {
        let q = a.abs() * self.half_levels as f64;
        let n = q.round();
        if (q - n).abs() <= 4.0 * f64::EPSILON * n.max(1.0) {
            n
        } else {
            q
        }
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid({} bits, ε = 1/{})", self.bits, self.half_levels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Counts `{n·ε : n ∈ ℤ} ∩ [-1, 1]` by walking outwards from zero with
    /// the spacing formula alone, independent of the grid's own enumeration.
    fn enumerate_count(spacing: f64) -> usize {
        let mut count = 1; // zero
        let mut n = 1i64;
        loop {
            let x = n as f64 * spacing;
            if x > 1.0 + 1e-12 {
                break;
            }
            count += 2;
            n += 1;
        }
        count
    }

    #[test]
    fn small_grids() {
        let g2 = Grid::new(2).unwrap();
        assert_eq!(g2.spacing(), 1.0);
        assert_eq!(g2.points().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(enumerate_count(g2.spacing()), 3);

        let g3 = Grid::new(3).unwrap();
        assert!((g3.spacing() - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(enumerate_count(g3.spacing()), 7);
        assert_eq!(g3.points().count(), 7);

        let g8 = Grid::new(8).unwrap();
        assert!((g8.spacing() - 1.0 / 127.0).abs() < 1e-16);
        assert_eq!(enumerate_count(g8.spacing()), 255);
    }

    #[test]
    fn cardinality_matches_bit_count() {
        for bits in 2..=16 {
            let g = Grid::new(bits).unwrap();
            let expected = (1usize << bits) - 1;
            assert_eq!(enumerate_count(g.spacing()), expected, "bits {bits}");
            assert_eq!(g.num_points() as usize, expected);
            let pts: Vec<f64> = g.points().collect();
            assert_eq!(pts.len(), expected);
            assert_eq!(pts[0], -1.0);
            assert_eq!(*pts.last().unwrap(), 1.0);
            assert!(pts.contains(&0.0));
            assert!(pts.windows(2).all(|w| w[0] < w[1]));
            assert!(pts.iter().all(|&x| g.contains(x)));
        }
    }

    #[test]
    fn rejects_too_few_bits() {
        assert!(matches!(Grid::new(1), Err(Error::InvalidResolution { bits: 1, .. })));
        assert!(Grid::new(0).is_err());
        assert!(Grid::new(33).is_err());
    }

    #[test]
    fn membership() {
        let g = Grid::new(3).unwrap();
        assert!(g.contains(1.0 / 3.0));
        assert!(g.contains(-2.0 / 3.0));
        assert!(!g.contains(0.5));
        assert!(!g.contains(1.0 + 1e-12));
        assert!(!g.contains(f64::NAN));
    }
}
