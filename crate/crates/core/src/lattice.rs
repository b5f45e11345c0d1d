//! Lattice primitives: vertices of Z^d, canonical nearest-neighbour edges,
//! and axis-aligned integer regions.

use crate::error::{FppError, Result};
use std::fmt;

/// A lattice point of Z^d. Dimension is fixed per environment (d >= 2).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex(pub Vec<i64>);

impl Vertex {
    pub fn new(coords: Vec<i64>) -> Self {
        Vertex(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn origin(d: usize) -> Self {
        Vertex(vec![0; d])
    }

    /// `n * e_axis`.
    pub fn axis_point(d: usize, axis: usize, n: i64) -> Self {
        let mut c = vec![0; d];
        c[axis] = n;
        Vertex(c)
    }

    pub fn l1_dist(&self, other: &Vertex) -> i64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn linf_dist(&self, other: &Vertex) -> i64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .max()
            .unwrap_or(0)
    }

    /// Neighbour one step along `axis` in direction `sign`.
    pub fn step(&self, axis: usize, sign: i64) -> Vertex {
        let mut c = self.0.clone();
        c[axis] += sign;
        Vertex(c)
    }

    /// Parses `"c1,c2,...,cd"`.
    pub fn parse(s: &str) -> Result<Vertex> {
        let coords: std::result::Result<Vec<i64>, _> =
            s.trim().split(',').map(|t| t.trim().parse::<i64>()).collect();
        coords
            .map(Vertex)
            .map_err(|_| FppError::InvalidPath(format!("bad vertex token {s:?}")))
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl fmt::Debug for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({self})")
    }
}

/// A non-oriented nearest-neighbour edge in canonical form: `lo` is the
/// lexicographically smaller endpoint, and the other endpoint is
/// `lo + e_axis`. Canonical form makes `Edge` usable as a map key with
/// Edge(v,w) == Edge(w,v).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub lo: Vertex,
    pub axis: usize,
}

impl Edge {
    /// Builds the canonical edge between two L1-adjacent vertices.
    pub fn new(v: &Vertex, w: &Vertex) -> Result<Edge> {
        if v.dim() != w.dim() || v.l1_dist(w) != 1 {
            return Err(FppError::InvalidPath(format!(
                "vertices {v} and {w} are not adjacent"
            )));
        }
        let axis = v
            .0
            .iter()
            .zip(&w.0)
            .position(|(a, b)| a != b)
            .expect("adjacent vertices differ in one coordinate");
        let lo = if v.0[axis] < w.0[axis] { v } else { w };
        Ok(Edge {
            lo: lo.clone(),
            axis,
        })
    }

    pub fn hi(&self) -> Vertex {
        self.lo.step(self.axis, 1)
    }

    pub fn endpoints(&self) -> (Vertex, Vertex) {
        (self.lo.clone(), self.hi())
    }

    /// True iff `v` is one of the two endpoints.
    pub fn touches(&self, v: &Vertex) -> bool {
        *v == self.lo || *v == self.hi()
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.lo, self.hi())
    }
}

impl fmt::Debug for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{} {}>", self.lo, self.hi())
    }
}

/// An axis-aligned box of lattice points, inclusive on both ends.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl Region {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Region> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(FppError::InvalidConfig("region bounds mismatch".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(FppError::InvalidConfig("empty region".into()));
        }
        Ok(Region { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        v.dim() == self.dim()
            && v.0
                .iter()
                .enumerate()
                .all(|(i, c)| self.lo[i] <= *c && *c <= self.hi[i])
    }

    /// An edge belongs to the region's environment iff at least one endpoint
    /// lies inside.
    pub fn touches_edge(&self, e: &Edge) -> bool {
        self.contains(&e.lo) || self.contains(&e.hi())
    }

    pub fn side(&self, axis: usize) -> i64 {
        self.hi[axis] - self.lo[axis] + 1
    }

    pub fn vertex_count(&self) -> usize {
        (0..self.dim()).map(|a| self.side(a) as usize).product()
    }

    /// Row-major index of an interior vertex.
    pub fn index_of(&self, v: &Vertex) -> Option<usize> {
        if !self.contains(v) {
            return None;
        }
        let mut idx = 0usize;
        for a in 0..self.dim() {
            idx = idx * self.side(a) as usize + (v.0[a] - self.lo[a]) as usize;
        }
        Some(idx)
    }

    pub fn vertex_at(&self, mut idx: usize) -> Vertex {
        let d = self.dim();
        let mut coords = vec![0i64; d];
        for a in (0..d).rev() {
            let side = self.side(a) as usize;
            coords[a] = self.lo[a] + (idx % side) as i64;
            idx /= side;
        }
        Vertex(coords)
    }

    /// The region grown by `m` in every direction.
    pub fn grown(&self, m: i64) -> Region {
        Region {
            lo: self.lo.iter().map(|c| c - m).collect(),
            hi: self.hi.iter().map(|c| c + m).collect(),
        }
    }

    /// Intersection, if non-empty.
    pub fn intersect(&self, other: &Region) -> Option<Region> {
        let lo: Vec<i64> = self
            .lo
            .iter()
            .zip(&other.lo)
            .map(|(a, b)| *a.max(b))
            .collect();
        let hi: Vec<i64> = self
            .hi
            .iter()
            .zip(&other.hi)
            .map(|(a, b)| *a.min(b))
            .collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            None
        } else {
            Some(Region { lo, hi })
        }
    }

    pub fn contains_region(&self, other: &Region) -> bool {
        self.lo.iter().zip(&other.lo).all(|(a, b)| a <= b)
            && self.hi.iter().zip(&other.hi).all(|(a, b)| a >= b)
    }

    pub fn iter_vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.vertex_count()).map(move |i| self.vertex_at(i))
    }

    /// d_inf distance from `v` to the complement of the region; 0 if outside.
    pub fn linf_depth(&self, v: &Vertex) -> i64 {
        if !self.contains(v) {
            return 0;
        }
        (0..self.dim())
            .map(|a| (v.0[a] - self.lo[a] + 1).min(self.hi[a] - v.0[a] + 1))
            .min()
            .unwrap()
    }

    /// Outer boundary: vertices outside the region with an L1-neighbour
    /// inside. There are no diagonal corners in this set.
    pub fn outer_boundary(&self) -> Vec<Vertex> {
        let mut out = Vec::new();
        for a in 0..self.dim() {
            for coord in [self.lo[a] - 1, self.hi[a] + 1] {
                let mut face = self.clone();
                face.lo[a] = coord;
                face.hi[a] = coord;
                out.extend(face.iter_vertices());
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[i64]) -> Vertex {
        Vertex(c.to_vec())
    }

    #[test]
    fn edge_is_canonical_in_both_orders() {
        let a = v(&[0, 0]);
        let b = v(&[0, 1]);
        assert_eq!(Edge::new(&a, &b).unwrap(), Edge::new(&b, &a).unwrap());
        assert!(Edge::new(&a, &v(&[1, 1])).is_err());
        let e = Edge::new(&v(&[3, -2]), &v(&[2, -2])).unwrap();
        assert_eq!(e.lo, v(&[2, -2]));
        assert_eq!(e.axis, 0);
        assert_eq!(e.hi(), v(&[3, -2]));
    }

    #[test]
    fn region_indexing_round_trips() {
        let r = Region::new(vec![-2, 1], vec![1, 3]).unwrap();
        assert_eq!(r.vertex_count(), 12);
        for i in 0..r.vertex_count() {
            assert_eq!(r.index_of(&r.vertex_at(i)), Some(i));
        }
        assert_eq!(r.index_of(&v(&[2, 2])), None);
    }

    #[test]
    fn linf_depth_of_boundary_is_one() {
        let r = Region::new(vec![0, 0], vec![4, 4]).unwrap();
        assert_eq!(r.linf_depth(&v(&[0, 2])), 1);
        assert_eq!(r.linf_depth(&v(&[2, 2])), 3);
        assert_eq!(r.linf_depth(&v(&[5, 2])), 0);
    }

    #[test]
    fn outer_boundary_has_no_corners() {
        let r = Region::new(vec![0, 0], vec![1, 1]).unwrap();
        let b = r.outer_boundary();
        assert_eq!(b.len(), 8);
        assert!(b.iter().all(|x| !r.contains(x)));
        assert!(!b.contains(&v(&[-1, -1])));
    }
}
