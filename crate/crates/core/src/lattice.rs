//! Hierarchical lattice geometry.
//!
//! Sites of the box `{0, 1, ..., L^N - 1}^d` are identified with strings of
//! `N` digits in `(Z_L)^d` through the base-`L` expansion of each coordinate:
//! coordinate `i` of site `x` equals `sum_j L^(j-1) * x_j[i]` with digits
//! `x_j[i] in {0..L-1}` for levels `j = 1..N`. The group operation is
//! digitwise addition mod `L`, *not* addition in `Z^d`; all kernels in this
//! crate are invariant under it.
//!
//! The central geometric quantity is the *coalescence scale* `j(x, y)`: the
//! smallest `j` such that `x` and `y` lie in the same `j`-block, equivalently
//! the highest level at which their digit strings differ (`0` iff `x == y`).
//! Every translation-invariant kernel on the lattice is a function of the
//! coalescence scale alone, which is why most routines in this crate take a
//! scale index instead of a pair of sites.
//!
//! Sites are stored in a packed mixed-radix form: the `d * N` base-`L` digits
//! in level-major order (level 1 innermost) read as a single base-`L`
//! integer. Consequences used throughout:
//!
//! * packed values enumerate the lattice as `0..volume`,
//! * the `j`-block index of `x` is `packed(x) / L^(d*j)`,
//! * the origin is `0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary condition selector.
///
/// `Free` keeps the hierarchical Laplacian massless only up to its top-level
/// zero mode; `Periodic` includes the top-level coupling that makes constant
/// fields exact zero modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bc {
    /// Free boundary condition.
    Free,
    /// Periodic boundary condition.
    Periodic,
}

impl std::fmt::Display for Bc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bc::Free => write!(f, "free"),
            Bc::Periodic => write!(f, "periodic"),
        }
    }
}

impl std::str::FromStr for Bc {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "free" | "f" => Ok(Bc::Free),
            "periodic" | "p" => Ok(Bc::Periodic),
            other => Err(Error::config(format!(
                "unknown boundary condition {other:?} (expected \"free\" or \"periodic\")"
            ))),
        }
    }
}

/// Geometry of a hierarchical box: side `L^N` in dimension `d`, plus the
/// boundary condition used by the kernels built on top of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    /// Spatial dimension `d >= 1`.
    pub d: u32,
    /// Block side `L >= 2`.
    pub l: u32,
    /// Number of hierarchy levels `N >= 1`; the box has `L^(d*N)` sites.
    pub levels: u32,
    /// Boundary condition.
    pub bc: Bc,
}

impl Shape {
    /// Validates parameters and the packed-representation capacity
    /// (`L^(d*N) <= 2^62`).
    pub fn new(d: u32, l: u32, levels: u32, bc: Bc) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("dimension d must be >= 1"));
        }
        if l < 2 {
            return Err(Error::config("block side L must be >= 2"));
        }
        if levels == 0 {
            return Err(Error::config("number of levels N must be >= 1"));
        }
        let digits = d
            .checked_mul(levels)
            .ok_or_else(|| Error::config("d * N overflows"))?;
        let vol = (l as u128).checked_pow(digits).filter(|&v| v <= 1 << 62);
        if vol.is_none() {
            return Err(Error::config(format!(
                "volume L^(d*N) = {l}^{digits} exceeds 2^62; shape too large"
            )));
        }
        Ok(Shape { d, l, levels, bc })
    }

    /// Number of sites `L^(d*N)`.
    pub fn volume(&self) -> u64 {
        (self.l as u64).pow(self.d * self.levels)
    }

    /// `L^d`, the number of children of a block (and the packed radix per level).
    pub fn block_arity(&self) -> u64 {
        (self.l as u64).pow(self.d)
    }

    /// Number of `j`-blocks, `L^(d*(N-j))`, for `0 <= j <= N`.
    pub fn blocks_at_scale(&self, j: u32) -> u64 {
        assert!(j <= self.levels, "scale {} > N = {}", j, self.levels);
        (self.l as u64).pow(self.d * (self.levels - j))
    }

    /// Number of sites in a `j`-block, `L^(d*j)`.
    pub fn block_volume(&self, j: u32) -> u64 {
        assert!(j <= self.levels, "scale {} > N = {}", j, self.levels);
        (self.l as u64).pow(self.d * j)
    }

    /// `L^e` as `f64` for signed exponents; the workhorse for kernel weights.
    pub fn lpow(&self, e: i64) -> f64 {
        (self.l as f64).powi(e as i32)
    }

    /// Number of ordered sites `x` with coalescence scale `j(o, x) = j`:
    /// `1` for `j = 0` and `L^(d*j) - L^(d*(j-1))` for `1 <= j <= N`.
    pub fn class_size(&self, j: u32) -> u64 {
        assert!(j <= self.levels, "scale {} > N = {}", j, self.levels);
        if j == 0 {
            1
        } else {
            self.block_volume(j) - self.block_volume(j - 1)
        }
    }

    /// Iterator over all sites in packed order.
    pub fn sites(&self) -> impl Iterator<Item = Site> {
        (0..self.volume()).map(Site)
    }

    /// The `j`-block index of a site (blocks numbered `0..blocks_at_scale(j)`).
    pub fn block_index(&self, x: Site, j: u32) -> u64 {
        assert!(j <= self.levels, "scale {} > N = {}", j, self.levels);
        x.0 / self.block_volume(j)
    }

    /// Coalescence scale of two sites: the smallest `j` such that both lie in
    /// the same `j`-block; `0` iff the sites are equal.
    pub fn coalescence(&self, x: Site, y: Site) -> u32 {
        let arity = self.block_arity();
        let (mut a, mut b) = (x.0, y.0);
        let mut j = 0;
        while a != b {
            a /= arity;
            b /= arity;
            j += 1;
        }
        debug_assert!(j <= self.levels);
        j
    }

    /// Digitwise addition mod `L` (the hierarchical group operation).
    pub fn oplus(&self, x: Site, y: Site) -> Site {
        let l = self.l as u64;
        let (mut a, mut b) = (x.0, y.0);
        let mut out = 0u64;
        let mut weight = 1u64;
        for _ in 0..self.d * self.levels {
            out += ((a % l + b % l) % l) * weight;
            a /= l;
            b /= l;
            weight *= l;
        }
        Site(out)
    }

    /// Digitwise negation mod `L`, so `oplus(x, ominus(x)) = origin`.
    pub fn ominus(&self, x: Site) -> Site {
        let l = self.l as u64;
        let mut a = x.0;
        let mut out = 0u64;
        let mut weight = 1u64;
        for _ in 0..self.d * self.levels {
            let digit = a % l;
            out += if digit == 0 { 0 } else { l - digit } * weight;
            a /= l;
            weight *= l;
        }
        Site(out)
    }

    /// Digit string of a site, level-major (entry `lev * d + i` is coordinate
    /// `i` of the level `lev + 1` digit).
    pub fn digits(&self, x: Site) -> Vec<u32> {
        let l = self.l as u64;
        let mut a = x.0;
        (0..self.d * self.levels)
            .map(|_| {
                let digit = (a % l) as u32;
                a /= l;
                digit
            })
            .collect()
    }

    /// Packs a digit string (same layout as [`Shape::digits`]) into a site.
    pub fn from_digits(&self, digits: &[u32]) -> Result<Site> {
        if digits.len() != (self.d * self.levels) as usize {
            return Err(Error::config(format!(
                "expected {} digits, got {}",
                self.d * self.levels,
                digits.len()
            )));
        }
        let l = self.l as u64;
        let mut out = 0u64;
        for &digit in digits.iter().rev() {
            if digit >= self.l {
                return Err(Error::config(format!("digit {digit} >= L = {}", self.l)));
            }
            out = out * l + digit as u64;
        }
        Ok(Site(out))
    }

    /// Cartesian coordinates in `{0..L^N - 1}^d`.
    pub fn coords(&self, x: Site) -> Vec<u64> {
        let l = self.l as u64;
        let mut coords = vec![0u64; self.d as usize];
        let mut a = x.0;
        let mut weight = 1u64;
        for _lev in 0..self.levels {
            for c in coords.iter_mut() {
                *c += (a % l) * weight;
                a /= l;
            }
            weight *= l;
        }
        coords
    }

    /// Inverse of [`Shape::coords`].
    pub fn from_coords(&self, coords: &[u64]) -> Result<Site> {
        if coords.len() != self.d as usize {
            return Err(Error::config(format!(
                "expected {} coordinates, got {}",
                self.d,
                coords.len()
            )));
        }
        let side = (self.l as u64).pow(self.levels);
        let l = self.l as u64;
        let mut rem: Vec<u64> = coords
            .iter()
            .map(|&c| {
                if c < side {
                    Ok(c)
                } else {
                    Err(Error::config(format!("coordinate {c} >= L^N = {side}")))
                }
            })
            .collect::<Result<_>>()?;
        let mut digits = Vec::with_capacity((self.d * self.levels) as usize);
        for _lev in 0..self.levels {
            for r in rem.iter_mut() {
                digits.push((*r % l) as u32);
                *r /= l;
            }
        }
        self.from_digits(&digits)
    }

    /// Euclidean norm of the coordinate vector.
    pub fn euclid_norm(&self, x: Site) -> f64 {
        self.coords(x)
            .iter()
            .map(|&c| (c as f64) * (c as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// Canonical representative of the coalescence class `j`: the origin for
    /// `j = 0`, otherwise the site with a single nonzero digit `1` in
    /// coordinate `0` at level `j` (coordinates `(L^(j-1), 0, ..., 0)`).
    pub fn class_representative(&self, j: u32) -> Site {
        assert!(j <= self.levels, "scale {} > N = {}", j, self.levels);
        if j == 0 {
            Site(0)
        } else {
            Site((self.l as u64).pow(self.d * (j - 1)))
        }
    }
}

/// A lattice site in packed form; see the module docs for the encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site(pub u64);

impl Site {
    /// The origin (all digits zero).
    pub const ORIGIN: Site = Site(0);

    /// Packed index, usable directly as an array index in `0..volume`.
    pub fn packed(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape(d: u32, l: u32, n: u32) -> Shape {
        Shape::new(d, l, n, Bc::Periodic).unwrap()
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(Shape::new(0, 2, 1, Bc::Free).is_err());
        assert!(Shape::new(1, 1, 1, Bc::Free).is_err());
        assert!(Shape::new(1, 2, 0, Bc::Free).is_err());
        // 2^63 sites exceed the packed capacity, 2^62 is the documented cap.
        assert!(Shape::new(1, 2, 63, Bc::Free).is_err());
        assert!(Shape::new(1, 2, 62, Bc::Free).is_ok());
    }

    #[test]
    fn volume_and_block_counts() {
        let s = shape(4, 2, 3);
        assert_eq!(s.volume(), 4096);
        assert_eq!(s.block_arity(), 16);
        assert_eq!(s.blocks_at_scale(0), 4096);
        assert_eq!(s.blocks_at_scale(3), 1);
        assert_eq!(s.block_volume(2), 256);
        // Class sizes partition the lattice.
        let total: u64 = (0..=3).map(|j| s.class_size(j)).sum();
        assert_eq!(total, s.volume());
    }

    #[test]
    fn coords_of_known_sites() {
        // d = 1, L = 2, N = 3: packed form is the plain binary coordinate.
        let s = shape(1, 2, 3);
        for x in 0..8 {
            assert_eq!(s.coords(Site(x)), vec![x]);
        }
        // d = 2, L = 2, N = 2: digits interleave coordinates.
        let s = shape(2, 2, 2);
        let x = s.from_digits(&[1, 0, 0, 1]).unwrap(); // level 1: (1,0), level 2: (0,1)
        assert_eq!(s.coords(x), vec![1, 2]);
        assert_eq!(s.from_coords(&[1, 2]).unwrap(), x);
    }

    #[test]
    fn coalescence_examples() {
        let s = shape(1, 2, 3);
        assert_eq!(s.coalescence(Site(0), Site(0)), 0);
        assert_eq!(s.coalescence(Site(0), Site(1)), 1);
        assert_eq!(s.coalescence(Site(0), Site(2)), 2);
        assert_eq!(s.coalescence(Site(5), Site(7)), 2);
        assert_eq!(s.coalescence(Site(0), Site(7)), 3);
    }

    #[test]
    fn class_representative_norms() {
        let s = shape(4, 2, 3);
        for j in 1..=3 {
            let x = s.class_representative(j);
            assert_eq!(s.coalescence(Site::ORIGIN, x), j);
            assert_eq!(s.euclid_norm(x), s.lpow(j as i64 - 1));
        }
    }

    #[test]
    fn blocks_nest() {
        let s = shape(2, 3, 2);
        for x in s.sites() {
            for j in 0..2 {
                assert_eq!(
                    s.block_index(x, j) / s.block_arity(),
                    s.block_index(x, j + 1)
                );
            }
        }
    }

    proptest! {
        #[test]
        fn group_laws(
            d in 1u32..4,
            l in 2u32..5,
            n in 1u32..4,
            seed_a in 0u64..1 << 32,
            seed_b in 0u64..1 << 32,
        ) {
            let s = shape(d, l, n);
            let a = Site(seed_a % s.volume());
            let b = Site(seed_b % s.volume());
            // Commutativity, identity, inverse.
            prop_assert_eq!(s.oplus(a, b), s.oplus(b, a));
            prop_assert_eq!(s.oplus(a, Site::ORIGIN), a);
            prop_assert_eq!(s.oplus(a, s.ominus(a)), Site::ORIGIN);
            // oplus stays inside the box.
            prop_assert!(s.oplus(a, b).0 < s.volume());
        }

        #[test]
        fn coalescence_is_translation_invariant(
            d in 1u32..4,
            l in 2u32..5,
            n in 1u32..4,
            sa in 0u64..1 << 32,
            sb in 0u64..1 << 32,
            sz in 0u64..1 << 32,
        ) {
            let s = shape(d, l, n);
            let a = Site(sa % s.volume());
            let b = Site(sb % s.volume());
            let z = Site(sz % s.volume());
            prop_assert_eq!(
                s.coalescence(s.oplus(a, z), s.oplus(b, z)),
                s.coalescence(a, b)
            );
        }

        #[test]
        fn coalescence_matches_block_membership(
            d in 1u32..4,
            l in 2u32..5,
            n in 1u32..4,
            sa in 0u64..1 << 32,
            sb in 0u64..1 << 32,
        ) {
            let s = shape(d, l, n);
            let a = Site(sa % s.volume());
            let b = Site(sb % s.volume());
            let j = s.coalescence(a, b);
            // Same j-block at the coalescence scale, different (j-1)-blocks below.
            prop_assert_eq!(s.block_index(a, j), s.block_index(b, j));
            if j > 0 {
                prop_assert_ne!(s.block_index(a, j - 1), s.block_index(b, j - 1));
            }
        }

        #[test]
        fn encodings_roundtrip(
            d in 1u32..4,
            l in 2u32..5,
            n in 1u32..4,
            sa in 0u64..1 << 32,
        ) {
            let s = shape(d, l, n);
            let a = Site(sa % s.volume());
            prop_assert_eq!(s.from_digits(&s.digits(a)).unwrap(), a);
            prop_assert_eq!(s.from_coords(&s.coords(a)).unwrap(), a);
        }

        #[test]
        fn coalescence_class_sizes(
            d in 1u32..3,
            l in 2u32..4,
            n in 1u32..4,
        ) {
            let s = shape(d, l, n);
            let mut counts = vec![0u64; (n + 1) as usize];
            for x in s.sites() {
                counts[s.coalescence(Site::ORIGIN, x) as usize] += 1;
            }
            for j in 0..=n {
                prop_assert_eq!(counts[j as usize], s.class_size(j));
            }
        }
    }
}
