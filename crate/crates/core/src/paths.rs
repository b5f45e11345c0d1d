//! Path algebra on the lattice: passage times, turns, reflections, G-turns,
//! the attached passage time, and corner swaps.
//!
//! A turn is an interior vertex whose incoming and outgoing steps are
//! perpendicular. Its reflection is the fourth corner of the unit square
//! spanned by the two steps. A G-turn additionally has an exactly equal
//! two-step detour through the reflection, with the reflection off the
//! path; swapping the corner for its reflection there produces another path
//! of identical passage time.

use crate::env::Environment;
use crate::error::{FppError, Result};
use crate::lattice::{Edge, Vertex};
use crate::weight::{Rat, Weight};
use num::Zero;
use std::collections::HashSet;
use std::fmt;

/// A finite nearest-neighbour path, identified with its edge list.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LatticePath {
    vertices: Vec<Vertex>,
}

impl LatticePath {
    /// Builds a path, checking consecutive adjacency.
    pub fn new(vertices: Vec<Vertex>) -> Result<LatticePath> {
        if vertices.is_empty() {
            return Err(FppError::InvalidPath("empty vertex sequence".into()));
        }
        let d = vertices[0].dim();
        for w in vertices.windows(2) {
            if w[0].dim() != d || w[1].dim() != d || w[0].l1_dist(&w[1]) != 1 {
                return Err(FppError::InvalidPath(format!(
                    "vertices {} and {} are not adjacent",
                    w[0], w[1]
                )));
            }
        }
        Ok(LatticePath { vertices })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    /// Number of edges.
    pub fn len(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn first(&self) -> &Vertex {
        self.vertices.first().unwrap()
    }

    pub fn last(&self) -> &Vertex {
        self.vertices.last().unwrap()
    }

    pub fn is_self_avoiding(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.vertices.len());
        self.vertices.iter().all(|v| seen.insert(v))
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.vertices
            .windows(2)
            .map(|w| Edge::new(&w[0], &w[1]).expect("consecutive path vertices are adjacent"))
    }

    pub fn contains_vertex(&self, v: &Vertex) -> bool {
        self.vertices.contains(v)
    }

    /// Concatenation; the first path must end where the second starts.
    pub fn join(&self, other: &LatticePath) -> Result<LatticePath> {
        if self.last() != other.first() {
            return Err(FppError::InvalidPath(
                "paths do not share the junction vertex".into(),
            ));
        }
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices[1..]);
        LatticePath::new(vertices)
    }

    /// Parses whitespace-separated vertex tuples: `"0,0 1,0 1,1"`.
    pub fn parse(s: &str) -> Result<LatticePath> {
        let vertices: Result<Vec<Vertex>> = s.split_whitespace().map(Vertex::parse).collect();
        LatticePath::new(vertices?)
    }
}

impl fmt::Display for LatticePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.vertices.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

impl fmt::Debug for LatticePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{self}]")
    }
}

/// Per-index label of a path vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointKind {
    Flat,
    Turn,
    GTurn,
}

/// Turn labels and reflections for every index of a path.
#[derive(Clone, Debug)]
pub struct TurnClassification {
    pub labels: Vec<PointKind>,
    /// Reflection across the path; endpoints reflect to themselves.
    pub reflections: Vec<Vertex>,
}

impl TurnClassification {
    pub fn g_turn_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == PointKind::GTurn)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn turn_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, k)| **k != PointKind::Flat)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn g_turn_count(&self) -> usize {
        self.labels.iter().filter(|k| **k == PointKind::GTurn).count()
    }
}

/// Surcharge parameters for the attached passage time.
#[derive(Clone, Debug, PartialEq)]
pub struct AttachedParams {
    pub beta: Rat,
}

impl AttachedParams {
    pub fn new(beta: Rat) -> Self {
        AttachedParams { beta }
    }

    /// The conventional choice beta = M^-2.
    pub fn from_weight_bound(m: &Rat) -> Self {
        let m2 = m * m;
        AttachedParams { beta: m2.recip() }
    }
}

/// Exact sum of edge weights along the path; BLOCKED if any edge is BLOCKED.
pub fn passage_time(env: &Environment, p: &LatticePath) -> Result<Weight> {
    let mut total = Weight::zero();
    for e in p.edges() {
        total += &env.weight(&e)?;
    }
    Ok(total)
}

/// Reflection of `x_i` across the path: interior indices map to
/// `x_{i-1} + (x_{i+1} - x_i)`, endpoints map to themselves.
pub fn reflect(p: &LatticePath, i: usize) -> Result<Vertex> {
    let l = p.len();
    let vs = p.vertices();
    if i > l {
        return Err(FppError::IndexOutOfRange {
            index: i,
            len: vs.len(),
        });
    }
    if i == 0 || i == l {
        return Ok(vs[i].clone());
    }
    let coords: Vec<i64> = (0..vs[i].dim())
        .map(|a| vs[i - 1].0[a] + vs[i + 1].0[a] - vs[i].0[a])
        .collect();
    Ok(Vertex::new(coords))
}

fn steps_perpendicular(prev: &Vertex, cur: &Vertex, next: &Vertex) -> bool {
    let axis_in = prev.0.iter().zip(&cur.0).position(|(a, b)| a != b);
    let axis_out = cur.0.iter().zip(&next.0).position(|(a, b)| a != b);
    axis_in.is_some() && axis_out.is_some() && axis_in != axis_out
}

/// Labels every index of a self-avoiding path as Flat, Turn or GTurn.
///
/// A G-turn needs: perpendicular steps, exact equality of the original
/// two-step weight sum with the reflected one (all four weights finite),
/// and the reflection off the whole path. A corner whose reflected
/// alternative leaves the environment box is a plain turn: the swap route
/// does not exist within the box.
pub fn classify_turns(env: &Environment, p: &LatticePath) -> Result<TurnClassification> {
    if !p.is_self_avoiding() {
        return Err(FppError::PathNotSelfAvoiding);
    }
    let vs = p.vertices();
    let on_path: HashSet<&Vertex> = vs.iter().collect();
    let mut labels = vec![PointKind::Flat; vs.len()];
    let mut reflections = Vec::with_capacity(vs.len());
    for i in 0..vs.len() {
        reflections.push(reflect(p, i)?);
    }
    for i in 1..vs.len().saturating_sub(1) {
        if !steps_perpendicular(&vs[i - 1], &vs[i], &vs[i + 1]) {
            continue;
        }
        labels[i] = PointKind::Turn;
        let star = &reflections[i];
        if on_path.contains(star) {
            continue;
        }
        let w_in = env.weight(&Edge::new(&vs[i - 1], &vs[i])?)?;
        let w_out = env.weight(&Edge::new(&vs[i], &vs[i + 1])?)?;
        let (Ok(r_in), Ok(r_out)) = (
            env.weight(&Edge::new(&vs[i - 1], star)?),
            env.weight(&Edge::new(star, &vs[i + 1])?),
        ) else {
            continue;
        };
        let original = match (w_in.finite(), w_out.finite()) {
            (Some(a), Some(b)) => a + b,
            _ => continue,
        };
        let swapped = match (r_in.finite(), r_out.finite()) {
            (Some(a), Some(b)) => a + b,
            _ => continue,
        };
        if original == swapped {
            labels[i] = PointKind::GTurn;
        }
    }
    Ok(TurnClassification {
        labels,
        reflections,
    })
}

/// Passage time plus `beta` per G-turn, exactly.
pub fn attached_path_time(
    env: &Environment,
    p: &LatticePath,
    params: &AttachedParams,
) -> Result<Weight> {
    let base = passage_time(env, p)?;
    if params.beta.is_zero() {
        return Ok(base);
    }
    let turns = classify_turns(env, p)?;
    let surcharge = Rat::from_integer(turns.g_turn_count().into()) * &params.beta;
    Ok(base + Weight::Finite(surcharge))
}

/// Result of a G-turn swap: always a vertex sequence, a lattice walk only
/// when no two swapped corners were path-adjacent in a staircase.
#[derive(Clone, Debug)]
pub struct SwapResult {
    pub vertices: Vec<Vertex>,
    /// Consecutive vertices are L1-adjacent.
    pub is_walk: bool,
    pub is_self_avoiding: bool,
}

impl SwapResult {
    /// The swapped sequence as a path. Only valid when `is_walk`.
    pub fn as_path(&self) -> Result<LatticePath> {
        LatticePath::new(self.vertices.clone())
    }
}

/// Replaces `x_i` by its reflection on the given subset of G-turn indices.
///
/// A subset with no two consecutive indices always yields a walk with
/// passage time exactly equal to the original: the two edges at each
/// swapped corner are exchanged for the reflected pair of equal total
/// weight, and distinct swapped corners touch disjoint edge pairs.
pub fn swap_g_turns(env: &Environment, p: &LatticePath, subset: &[usize]) -> Result<SwapResult> {
    let turns = classify_turns(env, p)?;
    let g: HashSet<usize> = turns.g_turn_indices().into_iter().collect();
    for &i in subset {
        if !g.contains(&i) {
            return Err(FppError::InvalidPath(format!(
                "index {i} is not a G-turn of the path"
            )));
        }
    }
    let mut vertices = p.vertices().to_vec();
    for &i in subset {
        vertices[i] = turns.reflections[i].clone();
    }
    let is_walk = vertices.windows(2).all(|w| w[0].l1_dist(&w[1]) == 1);
    let is_self_avoiding = is_walk && {
        let mut seen = HashSet::with_capacity(vertices.len());
        vertices.iter().all(|v| seen.insert(v))
    };
    Ok(SwapResult {
        vertices,
        is_walk,
        is_self_avoiding,
    })
}

/// True iff the subset is guaranteed to produce a walk: no two indices are
/// consecutive along the path.
pub fn swap_subset_admissible(subset: &[usize]) -> bool {
    let mut s = subset.to_vec();
    s.sort_unstable();
    s.windows(2).all(|w| w[1] - w[0] >= 2)
}

/// Sum of edge weights along a walk given as raw vertices (repeated edges
/// counted with multiplicity).
pub fn walk_time(env: &Environment, vertices: &[Vertex]) -> Result<Weight> {
    let mut total = Weight::zero();
    for w in vertices.windows(2) {
        total += &env.weight(&Edge::new(&w[0], &w[1])?)?;
    }
    Ok(total)
}
