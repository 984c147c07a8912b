//! Two-dimensional multi-indices and monomial helpers.
//!
//! Multi-indices i = (i1, i2) index the monomials y^i = y1^{i1} y2^{i2}.
//! Enumeration order everywhere in the crate is total degree ascending,
//! lexicographic within a degree: (0,1), (1,0), (0,2), (1,1), (2,0), ...
//! which gives every table and serialized file a deterministic layout.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub u32, pub u32);

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.order(), self.0).cmp(&(other.order(), other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl MultiIndex {
    pub const E1: MultiIndex = MultiIndex(1, 0);
    pub const E2: MultiIndex = MultiIndex(0, 1);
    pub const ZERO: MultiIndex = MultiIndex(0, 0);

    pub fn order(&self) -> u32 {
        self.0 + self.1
    }

    /// i! = i1! * i2!
    pub fn factorial(&self) -> f64 {
        factorial(self.0) * factorial(self.1)
    }

    /// y^i
    pub fn monomial(&self, y: Vector2<f64>) -> f64 {
        y.x.powi(self.0 as i32) * y.y.powi(self.1 as i32)
    }

    /// grad(y^i)
    pub fn grad_monomial(&self, y: Vector2<f64>) -> Vector2<f64> {
        let dx = if self.0 == 0 {
            0.0
        } else {
            self.0 as f64 * y.x.powi(self.0 as i32 - 1) * y.y.powi(self.1 as i32)
        };
        let dy = if self.1 == 0 {
            0.0
        } else {
            self.1 as f64 * y.x.powi(self.0 as i32) * y.y.powi(self.1 as i32 - 1)
        };
        Vector2::new(dx, dy)
    }

    /// Laplacian of the monomial, Δ(y^i), as a function of y.
    pub fn laplacian_monomial(&self, y: Vector2<f64>) -> f64 {
        let mut out = 0.0;
        if self.0 >= 2 {
            out += (self.0 * (self.0 - 1)) as f64
                * y.x.powi(self.0 as i32 - 2)
                * y.y.powi(self.1 as i32);
        }
        if self.1 >= 2 {
            out += (self.1 * (self.1 - 1)) as f64
                * y.x.powi(self.0 as i32)
                * y.y.powi(self.1 as i32 - 2);
        }
        out
    }

    pub fn add(&self, other: MultiIndex) -> MultiIndex {
        MultiIndex(self.0 + other.0, self.1 + other.1)
    }
}

pub fn factorial(n: u32) -> f64 {
    (1..=n as u64).map(|k| k as f64).product()
}

/// All multi-indices of total degree `degree`, lexicographic.
pub fn indices_of_degree(degree: u32) -> Vec<MultiIndex> {
    (0..=degree).map(|a| MultiIndex(a, degree - a)).collect()
}

/// All multi-indices with `min_degree <= |i| <= max_degree`, degree-major.
pub fn indices_in_range(min_degree: u32, max_degree: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for degree in min_degree..=max_degree {
        out.extend(indices_of_degree(degree));
    }
    out
}

/// The ordered index set {|l| <= n} with O(1) position lookup.
#[derive(Debug, Clone)]
pub struct MultiIndexSet {
    max_degree: u32,
    list: Vec<MultiIndex>,
}

impl MultiIndexSet {
    pub fn up_to(max_degree: u32) -> Self {
        Self {
            max_degree,
            list: indices_in_range(0, max_degree),
        }
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        self.list.iter().copied()
    }

    pub fn at(&self, pos: usize) -> MultiIndex {
        self.list[pos]
    }

    /// Position of `idx` in the enumeration; panics if |idx| exceeds the set.
    pub fn position(&self, idx: MultiIndex) -> usize {
        let d = idx.order();
        assert!(d <= self.max_degree, "multi-index outside the set");
        // degrees 0..d contribute 1 + 2 + ... + d = d(d+1)/2 entries
        (d as usize * (d as usize + 1)) / 2 + idx.0 as usize
    }
}
