//! Exact first passage times and optimal-path structure: label-setting
//! shortest paths over a boxed environment, geodesic enumeration and DAG
//! counting, union and pivotal edge sets, attached-time optimization, and
//! box resampling.
//!
//! Every operation works on the set of paths confined to the environment
//! box. A margin certificate (see [`compute_safe_margin`]) tells when the
//! boxed values coincide with the full-lattice ones; results carry a
//! `certified` flag accordingly. Ties are never broken: optimal structure
//! is always computed as a set.

use crate::env::Environment;
use crate::error::{FppError, Result};
use crate::lattice::{Edge, Region, Vertex};
use crate::paths::{attached_path_time, passage_time, AttachedParams, LatticePath};
use crate::weight::{Rat, Weight};
use num::bigint::BigUint;
use num::{One, Signed, Zero};
use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

/// Default cap on enumerated geodesics.
pub const DEFAULT_ENUM_CAP: usize = 1_000_000;

/// Exact distances from one source to every vertex of the environment box.
pub struct DistMap {
    region: Region,
    pub source: Vertex,
    dist: Vec<Option<Weight>>,
}

impl DistMap {
    pub fn get(&self, v: &Vertex) -> Option<&Weight> {
        self.region.index_of(v).and_then(|i| self.dist[i].as_ref())
    }

    fn get_id(&self, id: usize) -> Option<&Weight> {
        self.dist[id].as_ref()
    }
}

/// Label-setting shortest paths with exact rational weights.
///
/// The heap orders by (distance, vertex index); the index tie-break only
/// fixes traversal order, results are order-independent sets of values.
pub fn shortest_paths(env: &Environment, source: &Vertex) -> Result<DistMap> {
    let region = env.bounds().clone();
    let src_id = region
        .index_of(source)
        .ok_or_else(|| FppError::VertexOutOfBox(source.to_string()))?;
    let d = region.dim();
    let mut dist: Vec<Option<Weight>> = vec![None; region.vertex_count()];
    let mut done = vec![false; region.vertex_count()];
    let mut heap: BinaryHeap<Reverse<(Weight, usize)>> = BinaryHeap::new();
    dist[src_id] = Some(Weight::zero());
    heap.push(Reverse((Weight::zero(), src_id)));
    while let Some(Reverse((cost, id))) = heap.pop() {
        if done[id] {
            continue;
        }
        done[id] = true;
        let v = region.vertex_at(id);
        for axis in 0..d {
            for sign in [-1i64, 1] {
                let u = v.step(axis, sign);
                let Some(uid) = region.index_of(&u) else {
                    continue;
                };
                if done[uid] {
                    continue;
                }
                let e = Edge::new(&v, &u).expect("neighbouring vertices are adjacent");
                let w = env.weight(&e)?;
                if w.is_blocked() {
                    continue;
                }
                let next = cost.clone() + &w;
                if dist[uid].as_ref().is_none_or(|cur| next < *cur) {
                    dist[uid] = Some(next.clone());
                    heap.push(Reverse((next, uid)));
                }
            }
        }
    }
    Ok(DistMap {
        region,
        source: source.clone(),
        dist,
    })
}

/// Result of one exact first-passage-time query.
#[derive(Clone, Debug)]
pub struct FptResult {
    pub value: Weight,
    /// One optimal path, extracted by lexicographically smallest
    /// predecessor. Reporting only; the set-level operations never pick
    /// a winner.
    pub one_geodesic: LatticePath,
    /// The region within which the value is exact.
    pub certified_box: Region,
    /// True when a margin certificate guarantees the boxed value equals the
    /// full-lattice value; false means Restricted (box-relative) semantics.
    pub certified: bool,
}

/// The monotone axis-ordered path between two vertices; it stays inside any
/// box containing both endpoints.
pub fn straight_path(v: &Vertex, w: &Vertex) -> LatticePath {
    let mut vertices = vec![v.clone()];
    let mut cur = v.clone();
    for axis in 0..v.dim() {
        let sign = if w.0[axis] >= cur.0[axis] { 1 } else { -1 };
        while cur.0[axis] != w.0[axis] {
            cur = cur.step(axis, sign);
            vertices.push(cur.clone());
        }
    }
    LatticePath::new(vertices).expect("axis-ordered steps are adjacent")
}

/// Smallest margin M such that every path leaving the bounding box of
/// (v, w) grown by M is strictly slower than the straight coordinate path:
/// F^- * (|v-w|_1 + 2(M+1)) > U. Inside that box the restricted first
/// passage time, and all optimal-path sets, equal the full-lattice ones.
pub fn compute_safe_margin(env: &Environment, v: &Vertex, w: &Vertex) -> Result<i64> {
    let f_minus = env.spec().derived_stats().f_minus;
    if f_minus.is_zero() {
        return Err(FppError::NoCertificate);
    }
    let u = passage_time(env, &straight_path(v, w))?;
    let Weight::Finite(u) = u else {
        return Err(FppError::UncertifiedFpt);
    };
    let l1 = Rat::from_integer(v.l1_dist(w).into());
    // smallest integer M with M > (U/F^- - |v-w|_1 - 2) / 2
    let q = (u / f_minus - l1 - Rat::from_integer(2.into())) / Rat::from_integer(2.into());
    let m = q.floor().to_integer() + num::BigInt::one();
    let m: i64 = m.try_into().map_err(|_| FppError::UncertifiedFpt)?;
    Ok(m.max(0))
}

/// Bounding box of two vertices grown by a margin.
pub fn margin_region(v: &Vertex, w: &Vertex, m: i64) -> Region {
    let lo: Vec<i64> = v.0.iter().zip(&w.0).map(|(a, b)| *a.min(b) - m).collect();
    let hi: Vec<i64> = v.0.iter().zip(&w.0).map(|(a, b)| *a.max(b) + m).collect();
    Region { lo, hi }
}

/// Exact first passage time between two boxed vertices.
pub fn first_passage_time(env: &Environment, v: &Vertex, w: &Vertex) -> Result<FptResult> {
    let dist = shortest_paths(env, v)?;
    fpt_from_dist(env, &dist, v, w)
}

/// Same as [`first_passage_time`] but reusing a distance map from `v`.
pub fn fpt_from_dist(
    env: &Environment,
    dist_v: &DistMap,
    v: &Vertex,
    w: &Vertex,
) -> Result<FptResult> {
    let value = dist_v.get(w).cloned().ok_or(FppError::Disconnected)?;
    let one_geodesic = extract_one_geodesic(env, dist_v, v, w)?;
    let (certified, certified_box) = match compute_safe_margin(env, v, w) {
        Ok(m) => {
            let needed = margin_region(v, w, m);
            if env.bounds().contains_region(&needed) {
                (true, needed)
            } else {
                (false, env.bounds().clone())
            }
        }
        Err(_) => (false, env.bounds().clone()),
    };
    Ok(FptResult {
        value,
        one_geodesic,
        certified_box,
        certified,
    })
}

/// Walks back from `w` through optimal predecessors, lexicographically
/// smallest first, backtracking if a zero-weight plateau dead-ends.
fn extract_one_geodesic(
    env: &Environment,
    dist_v: &DistMap,
    v: &Vertex,
    w: &Vertex,
) -> Result<LatticePath> {
    let region = env.bounds();
    let d = region.dim();
    if dist_v.get(w).is_none() {
        return Err(FppError::Disconnected);
    }
    // DFS over the reversed optimal-predecessor relation
    let mut path = vec![w.clone()];
    let mut iters: Vec<usize> = vec![0];
    while let Some(x) = path.last().cloned() {
        if x == *v {
            path.reverse();
            return Ok(LatticePath::new(path).expect("predecessor steps are adjacent"));
        }
        let dx = dist_v
            .get(&x)
            .expect("walk stays on reachable vertices")
            .clone();
        // candidate predecessors in lexicographic order
        let mut candidates: Vec<Vertex> = Vec::new();
        for axis in 0..d {
            for sign in [-1i64, 1] {
                let y = x.step(axis, sign);
                if !region.contains(&y) || path.contains(&y) {
                    continue;
                }
                let Some(dy) = dist_v.get(&y) else { continue };
                let e = Edge::new(&x, &y).expect("neighbours are adjacent");
                let wxy = env.weight(&e)?;
                if wxy.is_blocked() {
                    continue;
                }
                if dy.clone() + &wxy == dx {
                    candidates.push(y);
                }
            }
        }
        candidates.sort();
        let next_choice = iters.last_mut().expect("one cursor per path vertex");
        if *next_choice < candidates.len() {
            let y = candidates[*next_choice].clone();
            *next_choice += 1;
            path.push(y);
            iters.push(0);
        } else {
            path.pop();
            iters.pop();
            if path.is_empty() {
                break;
            }
        }
    }
    // unreachable: a self-avoiding optimal path always exists when the
    // target is reachable
    Err(FppError::Disconnected)
}

/// Exact or saturated geodesic count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GeodesicCount {
    Exact(BigUint),
    Saturated,
}

impl GeodesicCount {
    pub fn exact(&self) -> Option<&BigUint> {
        match self {
            GeodesicCount::Exact(n) => Some(n),
            GeodesicCount::Saturated => None,
        }
    }
}

/// The enumerated structure of all self-avoiding optimal paths.
#[derive(Clone, Debug)]
pub struct GeodesicSet {
    pub count: GeodesicCount,
    pub union_edges: BTreeSet<Edge>,
    /// Intersection of the enumerated paths; equals the true pivotal set
    /// whenever the enumeration did not saturate.
    pub pivotal_edges: BTreeSet<Edge>,
    pub sample_paths: Vec<LatticePath>,
}

/// Depth-first enumeration of all self-avoiding optimal paths, pruned by
/// exact remaining distance: a prefix ending at x extends through y iff
/// prefix time + w(x,y) + t(y,w) equals t(v,w). Returns up to `cap` paths;
/// the count is marked saturated when the cap is hit.
pub fn enumerate_geodesics(
    env: &Environment,
    v: &Vertex,
    w: &Vertex,
    cap: usize,
) -> Result<GeodesicSet> {
    let dist_w = shortest_paths(env, w)?;
    let total = dist_w.get(v).cloned().ok_or(FppError::Disconnected)?;
    let region = env.bounds().clone();
    let d = region.dim();
    let mut paths: Vec<LatticePath> = Vec::new();
    let mut saturated = false;

    let mut visited = vec![false; region.vertex_count()];
    let mut prefix: Vec<Vertex> = vec![v.clone()];
    let mut times: Vec<Weight> = vec![Weight::zero()];
    let mut cursor: Vec<usize> = vec![0];
    visited[region.index_of(v).expect("source is boxed")] = true;

    while let Some(x) = prefix.last().cloned() {
        if x == *w {
            paths.push(LatticePath::new(prefix.clone()).expect("DFS steps are adjacent"));
            if paths.len() >= cap {
                saturated = true;
                break;
            }
            // geodesics are self-avoiding, so nothing extends past w
            visited[region.index_of(&x).expect("boxed")] = false;
            prefix.pop();
            times.pop();
            cursor.pop();
            continue;
        }
        let rank = cursor.last_mut().expect("one cursor per level");
        if *rank >= 2 * d {
            visited[region.index_of(&x).expect("boxed")] = false;
            prefix.pop();
            times.pop();
            cursor.pop();
            continue;
        }
        let axis = *rank / 2;
        let sign = if rank.is_multiple_of(2) { -1 } else { 1 };
        *rank += 1;
        let y = x.step(axis, sign);
        let Some(yid) = region.index_of(&y) else {
            continue;
        };
        if visited[yid] {
            continue;
        }
        let e = Edge::new(&x, &y).expect("neighbours are adjacent");
        let wxy = env.weight(&e)?;
        if wxy.is_blocked() {
            continue;
        }
        let Some(rest) = dist_w.get_id(yid) else {
            continue;
        };
        let through = times.last().expect("time per level").clone() + &wxy + rest;
        if through != total {
            continue;
        }
        let t_next = times.last().unwrap().clone() + &wxy;
        visited[yid] = true;
        prefix.push(y);
        times.push(t_next);
        cursor.push(0);
    }

    let mut union_edges = BTreeSet::new();
    for p in &paths {
        union_edges.extend(p.edges());
    }
    let pivotal_edges = intersect_paths(&paths);
    let count = if saturated {
        GeodesicCount::Saturated
    } else {
        GeodesicCount::Exact(BigUint::from(paths.len()))
    };
    Ok(GeodesicSet {
        count,
        union_edges,
        pivotal_edges,
        sample_paths: paths,
    })
}

/// Intersection of the edge sets of a family of paths.
pub fn intersect_paths(paths: &[LatticePath]) -> BTreeSet<Edge> {
    let mut iter = paths.iter();
    let Some(first) = iter.next() else {
        return BTreeSet::new();
    };
    let mut acc: BTreeSet<Edge> = first.edges().collect();
    for p in iter {
        let edges: BTreeSet<Edge> = p.edges().collect();
        acc = acc.intersection(&edges).cloned().collect();
        if acc.is_empty() {
            break;
        }
    }
    acc
}

fn require_positive_weights(env: &Environment) -> Result<()> {
    match env.min_finite_weight() {
        Some(m) if m.is_positive() => Ok(()),
        Some(_) => Err(FppError::ZeroWeightPresent),
        // all edges blocked: vacuously positive, queries will disconnect
        None => Ok(()),
    }
}

/// Exact geodesic count by dynamic programming over the geodesic DAG.
///
/// Positive weights make t(v, .) strictly increase along every optimal
/// path, so optimal walks are automatically self-avoiding and the edges on
/// optimal paths form a DAG ordered by t(v, .).
pub fn count_geodesics_dp(env: &Environment, v: &Vertex, w: &Vertex) -> Result<BigUint> {
    require_positive_weights(env)?;
    let dist_v = shortest_paths(env, v)?;
    let dist_w = shortest_paths(env, w)?;
    count_dp_from_dists(env, &dist_v, &dist_w, v, w)
}

/// DAG-counting core, reusing precomputed distance maps.
pub fn count_dp_from_dists(
    env: &Environment,
    dist_v: &DistMap,
    dist_w: &DistMap,
    v: &Vertex,
    w: &Vertex,
) -> Result<BigUint> {
    let region = env.bounds();
    let d = region.dim();
    let total = dist_v.get(w).cloned().ok_or(FppError::Disconnected)?;
    if v == w {
        return Ok(BigUint::one());
    }
    // vertices on some geodesic, ordered by distance from v
    let mut relevant: Vec<(Weight, usize)> = Vec::new();
    for id in 0..region.vertex_count() {
        if let (Some(a), Some(b)) = (dist_v.get_id(id), dist_w.get_id(id)) {
            if a.clone() + b == total {
                relevant.push((a.clone(), id));
            }
        }
    }
    relevant.sort();
    let mut counts: Vec<Option<BigUint>> = vec![None; region.vertex_count()];
    counts[region.index_of(v).expect("source is boxed")] = Some(BigUint::one());
    for (dx, id) in &relevant {
        let x = region.vertex_at(*id);
        if x == *v {
            continue;
        }
        let mut acc = BigUint::zero();
        for axis in 0..d {
            for sign in [-1i64, 1] {
                let y = x.step(axis, sign);
                let Some(yid) = region.index_of(&y) else {
                    continue;
                };
                let (Some(dy), Some(dyw)) = (dist_v.get_id(yid), dist_w.get_id(yid)) else {
                    continue;
                };
                if dy.clone() + dyw != total {
                    continue;
                }
                let e = Edge::new(&x, &y).expect("neighbours are adjacent");
                let wxy = env.weight(&e)?;
                if wxy.is_blocked() {
                    continue;
                }
                if dy.clone() + &wxy == *dx {
                    if let Some(c) = &counts[yid] {
                        acc += c;
                    }
                }
            }
        }
        counts[*id] = Some(acc);
    }
    Ok(counts[region.index_of(w).expect("target is boxed")]
        .clone()
        .unwrap_or_else(BigUint::zero))
}

/// Length (in edges) of the longest geodesic, by the same DAG order as the
/// counter. Requires positive weights.
pub fn longest_geodesic_len(
    env: &Environment,
    dist_v: &DistMap,
    dist_w: &DistMap,
    v: &Vertex,
    w: &Vertex,
) -> Result<i64> {
    let region = env.bounds();
    let d = region.dim();
    let total = dist_v.get(w).cloned().ok_or(FppError::Disconnected)?;
    if v == w {
        return Ok(0);
    }
    let mut relevant: Vec<(Weight, usize)> = Vec::new();
    for id in 0..region.vertex_count() {
        if let (Some(a), Some(b)) = (dist_v.get_id(id), dist_w.get_id(id)) {
            if a.clone() + b == total {
                relevant.push((a.clone(), id));
            }
        }
    }
    relevant.sort();
    let mut best: Vec<Option<i64>> = vec![None; region.vertex_count()];
    best[region.index_of(v).expect("source is boxed")] = Some(0);
    for (dx, id) in &relevant {
        let x = region.vertex_at(*id);
        if x == *v {
            continue;
        }
        let mut longest: Option<i64> = None;
        for axis in 0..d {
            for sign in [-1i64, 1] {
                let y = x.step(axis, sign);
                let Some(yid) = region.index_of(&y) else {
                    continue;
                };
                let (Some(dy), Some(dyw)) = (dist_v.get_id(yid), dist_w.get_id(yid)) else {
                    continue;
                };
                if dy.clone() + dyw != total {
                    continue;
                }
                let e = Edge::new(&x, &y).expect("neighbours are adjacent");
                let wxy = env.weight(&e)?;
                if wxy.is_blocked() {
                    continue;
                }
                if dy.clone() + &wxy == *dx {
                    if let Some(len) = best[yid] {
                        longest = Some(longest.map_or(len + 1, |c: i64| c.max(len + 1)));
                    }
                }
            }
        }
        best[*id] = longest;
    }
    best[region.index_of(w).expect("target is boxed")].ok_or(FppError::Disconnected)
}

/// Edges lying on at least one optimal path.
///
/// With strictly positive in-box weights this is computed by the two-sided
/// distance characterization; with zero weights present it falls back to
/// explicit enumeration (and errors if that saturates).
pub fn union_edges(env: &Environment, v: &Vertex, w: &Vertex) -> Result<BTreeSet<Edge>> {
    if require_positive_weights(env).is_ok() {
        let dist_v = shortest_paths(env, v)?;
        let dist_w = shortest_paths(env, w)?;
        union_from_dists(env, &dist_v, &dist_w, w)
    } else {
        let set = enumerate_geodesics(env, v, w, DEFAULT_ENUM_CAP)?;
        if set.count == GeodesicCount::Saturated {
            return Err(FppError::SaturatedEnumeration);
        }
        Ok(set.union_edges)
    }
}

/// Characterization core for positive weights: e = (a,b) is on an optimal
/// path iff some orientation satisfies t(v,a) + tau_e + t(b,w) = t(v,w).
pub fn union_from_dists(
    env: &Environment,
    dist_v: &DistMap,
    dist_w: &DistMap,
    w: &Vertex,
) -> Result<BTreeSet<Edge>> {
    let region = env.bounds();
    let d = region.dim();
    let total = dist_v.get(w).cloned().ok_or(FppError::Disconnected)?;
    let mut out = BTreeSet::new();
    for id in 0..region.vertex_count() {
        let a = region.vertex_at(id);
        for axis in 0..d {
            let b = a.step(axis, 1);
            if !region.contains(&b) {
                continue;
            }
            let e = Edge { lo: a.clone(), axis };
            let wab = env.weight(&e)?;
            if wab.is_blocked() {
                continue;
            }
            let fwd = match (dist_v.get(&a), dist_w.get(&b)) {
                (Some(x), Some(y)) => Some(x.clone() + &wab + y),
                _ => None,
            };
            let bwd = match (dist_v.get(&b), dist_w.get(&a)) {
                (Some(x), Some(y)) => Some(x.clone() + &wab + y),
                _ => None,
            };
            let best = match (fwd, bwd) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (Some(x), None) | (None, Some(x)) => Some(x),
                (None, None) => None,
            };
            if best == Some(total.clone()) {
                out.insert(e);
            }
        }
    }
    Ok(out)
}

/// Edges lying on every optimal path, decided by the deletion test:
/// blocking the edge strictly increases (or disconnects) the first passage
/// time.
pub fn pivotal_edges(env: &Environment, v: &Vertex, w: &Vertex) -> Result<BTreeSet<Edge>> {
    let union = union_edges(env, v, w)?;
    let dist_v = shortest_paths(env, v)?;
    let total = dist_v.get(w).cloned().ok_or(FppError::Disconnected)?;
    pivotal_by_deletion(env, v, w, &union, &total)
}

/// Deletion-test core over a candidate edge set.
pub fn pivotal_by_deletion(
    env: &Environment,
    v: &Vertex,
    w: &Vertex,
    candidates: &BTreeSet<Edge>,
    total: &Weight,
) -> Result<BTreeSet<Edge>> {
    let mut out = BTreeSet::new();
    for e in candidates {
        let blocked = env.with_overrides(&[(e.clone(), Weight::Blocked)])?;
        let dist = shortest_paths(&blocked, v)?;
        let increased = match dist.get(w) {
            Some(t) => t > total,
            None => true,
        };
        if increased {
            out.insert(e.clone());
        }
    }
    Ok(out)
}

/// Result of the attached-time optimization.
#[derive(Clone, Debug)]
pub struct AttachedResult {
    pub value: Weight,
    /// All self-avoiding optimizers found (the attached-optimal set),
    /// complete iff `cap_hit` is false.
    pub optimizers: Vec<LatticePath>,
    pub explored: usize,
    /// When true the search budget ran out: `value` is only an upper bound
    /// and the optimizer list may be incomplete.
    pub cap_hit: bool,
}

/// Exact minimum of the attached path time (plain time plus beta per
/// G-turn) over self-avoiding boxed paths, by depth-first branch and bound.
///
/// The G-turn count of a prefix can drop when the path later visits a
/// reflection, so surcharges are only evaluated on complete paths; the
/// pruning bound is the plain time to go, a valid lower bound because the
/// attached time dominates the plain time.
pub fn attached_first_passage_time(
    env: &Environment,
    v: &Vertex,
    w: &Vertex,
    params: &AttachedParams,
    cap: usize,
) -> Result<AttachedResult> {
    if params.beta.is_negative() {
        return Err(FppError::InvalidConfig("beta must be non-negative".into()));
    }
    let dist_w = shortest_paths(env, w)?;
    if dist_w.get(v).is_none() {
        return Err(FppError::Disconnected);
    }
    // seed the incumbent with one geodesic's attached time
    let fpt = fpt_from_dist(env, &shortest_paths(env, v)?, v, w)?;
    let mut best = attached_path_time(env, &fpt.one_geodesic, params)?;
    let mut optimizers: Vec<LatticePath> = Vec::new();
    let mut explored = 0usize;
    let mut cap_hit = false;

    let region = env.bounds().clone();
    let d = region.dim();
    let mut visited = vec![false; region.vertex_count()];
    let mut prefix: Vec<Vertex> = vec![v.clone()];
    let mut times: Vec<Weight> = vec![Weight::zero()];
    let mut cursor: Vec<usize> = vec![0];
    visited[region.index_of(v).expect("source is boxed")] = true;

    while let Some(x) = prefix.last().cloned() {
        if x == *w && prefix.len() > 1 {
            let path = LatticePath::new(prefix.clone()).expect("DFS steps are adjacent");
            let t_plus = attached_path_time(env, &path, params)?;
            if t_plus < best {
                best = t_plus;
                optimizers.clear();
                optimizers.push(path);
            } else if t_plus == best && optimizers.len() < cap {
                optimizers.push(path);
            }
            visited[region.index_of(&x).expect("boxed")] = false;
            prefix.pop();
            times.pop();
            cursor.pop();
            continue;
        }
        let rank = cursor.last_mut().expect("one cursor per level");
        if *rank >= 2 * d {
            visited[region.index_of(&x).expect("boxed")] = false;
            prefix.pop();
            times.pop();
            cursor.pop();
            continue;
        }
        let axis = *rank / 2;
        let sign = if rank.is_multiple_of(2) { -1 } else { 1 };
        *rank += 1;
        let y = x.step(axis, sign);
        let Some(yid) = region.index_of(&y) else {
            continue;
        };
        if visited[yid] {
            continue;
        }
        let e = Edge::new(&x, &y).expect("neighbours are adjacent");
        let wxy = env.weight(&e)?;
        if wxy.is_blocked() {
            continue;
        }
        let Some(rest) = dist_w.get_id(yid) else {
            continue;
        };
        explored += 1;
        if explored > cap {
            cap_hit = true;
            break;
        }
        let bound = times.last().expect("time per level").clone() + &wxy + rest;
        if bound > best {
            continue;
        }
        let t_next = times.last().unwrap().clone() + &wxy;
        visited[yid] = true;
        prefix.push(y);
        times.push(t_next);
        cursor.push(0);
    }

    // the seeded incumbent may never be re-found if the cap hit early
    if optimizers.is_empty() && !cap_hit {
        optimizers.push(fpt.one_geodesic);
    }
    Ok(AttachedResult {
        value: best,
        optimizers,
        explored,
        cap_hit,
    })
}

/// Replaces the weights of all edges meeting `block` with the independent
/// copy's weights, leaving everything else untouched.
pub fn resample_box(
    env: &Environment,
    env_star: &Environment,
    block: &Region,
) -> Result<Environment> {
    if env.spec() != env_star.spec() || env.bounds() != env_star.bounds() {
        return Err(FppError::InvalidConfig(
            "resampling requires environments with equal spec and box".into(),
        ));
    }
    let mut pairs = Vec::new();
    for e in env.edges() {
        if block.contains(&e.lo) || block.contains(&e.hi()) {
            pairs.push((e.clone(), env_star.weight(&e)?));
        }
    }
    env.with_overrides(&pairs)
}

/// The M-dependent support bounds used by the planted-pattern condition.
#[derive(Clone, Debug, PartialEq)]
pub struct MBounds {
    pub f_minus_m: Rat,
    pub f_plus_m: Rat,
}

/// Computes F^-_M and F^+_M from the law and the weight bound M.
///
/// F^+_M is M itself for unbounded laws, F^+ - M^-2 when the supremum
/// carries no mass, and F^+ when it does; F^-_M is F^- + M^-2 when the
/// infimum carries no mass and F^- otherwise.
pub fn m_bounds(env: &Environment, m: &Rat) -> MBounds {
    let spec = env.spec();
    let stats = spec.derived_stats();
    let m2_inv = (m * m).recip();
    let f_minus_m = if spec.prob_at(&stats.f_minus).is_zero() {
        &stats.f_minus + m2_inv.clone()
    } else {
        stats.f_minus.clone()
    };
    let f_plus_m = match &stats.f_plus {
        None => m.clone(),
        Some(fp) => {
            if spec.prob_at(fp).is_zero() {
                fp - m2_inv
            } else {
                fp.clone()
            }
        }
    };
    MBounds { f_minus_m, f_plus_m }
}

/// The planted-pattern condition for a detour path inside a box: all four
/// weights around each turn equal alpha, the remaining detour edges are at
/// most F^-_M, and every other edge meeting the box is at least F^+_M.
pub fn gamma_b_condition(
    env_star: &Environment,
    gamma: &LatticePath,
    block: &Region,
    alpha: &Rat,
    bounds: &MBounds,
) -> Result<bool> {
    if env_star.spec().prob_at(alpha).is_zero() {
        return Err(FppError::AlphaNotAtom);
    }
    let vs = gamma.vertices();
    let mut covered: BTreeSet<Edge> = BTreeSet::new();
    let mut turn_edges: Vec<Edge> = Vec::new();
    let mut plain_edges: Vec<Edge> = Vec::new();
    // geometric turns only: the pattern is planted, not sampled
    let mut turn_adjacent: BTreeSet<Edge> = BTreeSet::new();
    for i in 1..vs.len().saturating_sub(1) {
        let a_in = vs[i - 1].0.iter().zip(&vs[i].0).position(|(a, b)| a != b);
        let a_out = vs[i].0.iter().zip(&vs[i + 1].0).position(|(a, b)| a != b);
        if a_in == a_out {
            continue;
        }
        let star_coords: Vec<i64> = (0..vs[i].dim())
            .map(|a| vs[i - 1].0[a] + vs[i + 1].0[a] - vs[i].0[a])
            .collect();
        let star = Vertex::new(star_coords);
        let e_in = Edge::new(&vs[i - 1], &vs[i])?;
        let e_out = Edge::new(&vs[i], &vs[i + 1])?;
        let r_in = Edge::new(&vs[i - 1], &star)?;
        let r_out = Edge::new(&star, &vs[i + 1])?;
        turn_adjacent.insert(e_in.clone());
        turn_adjacent.insert(e_out.clone());
        for e in [e_in, e_out, r_in, r_out] {
            covered.insert(e.clone());
            turn_edges.push(e);
        }
    }
    for e in gamma.edges() {
        if !turn_adjacent.contains(&e) {
            plain_edges.push(e.clone());
        }
        covered.insert(e);
    }

    let alpha_w = Weight::Finite(alpha.clone());
    for e in &turn_edges {
        if env_star.weight(e)? != alpha_w {
            return Ok(false);
        }
    }
    let f_minus_cap = Weight::Finite(bounds.f_minus_m.clone());
    for e in &plain_edges {
        if env_star.weight(e)? > f_minus_cap {
            return Ok(false);
        }
    }
    let f_plus_floor = Weight::Finite(bounds.f_plus_m.clone());
    for e in env_star.edges() {
        if (block.contains(&e.lo) || block.contains(&e.hi()))
            && !covered.contains(&e)
            && env_star.weight(&e)? < f_plus_floor
        {
            return Ok(false);
        }
    }
    Ok(true)
}

/// True iff `x` lies on the outer boundary of the region.
pub fn on_outer_boundary(region: &Region, x: &Vertex) -> bool {
    if region.contains(x) {
        return false;
    }
    (0..x.dim()).any(|axis| {
        [-1i64, 1]
            .into_iter()
            .any(|s| region.contains(&x.step(axis, s)))
    })
}

/// First and last vertices of a path on the outer boundary of a region.
pub fn boundary_hits(p: &LatticePath, region: &Region) -> Result<(Vertex, Vertex)> {
    let hits: Vec<&Vertex> = p
        .vertices()
        .iter()
        .filter(|x| on_outer_boundary(region, x))
        .collect();
    match (hits.first(), hits.last()) {
        (Some(first), Some(last)) => Ok(((*first).clone(), (*last).clone())),
        _ => Err(FppError::NoHit),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_environment, DistributionSpec};
    use crate::weight::{rat, rat_int};

    fn v2(x: i64, y: i64) -> Vertex {
        Vertex::new(vec![x, y])
    }

    fn unit_env(side: i64) -> Environment {
        let spec = DistributionSpec::atoms(2, vec![(rat_int(1), rat_int(1))]);
        let bounds = Region::new(vec![-side, -side], vec![side, side]).unwrap();
        sample_environment(&spec, &bounds, 0).unwrap()
    }

    fn atoms_env(seed: u64, lo: Vec<i64>, hi: Vec<i64>) -> Environment {
        let spec = DistributionSpec::atoms(
            lo.len(),
            vec![(rat_int(1), rat(1, 2)), (rat_int(2), rat(1, 2))],
        );
        sample_environment(&spec, &Region::new(lo, hi).unwrap(), seed).unwrap()
    }

    #[test]
    fn straight_segment_in_unit_weights() {
        let env = unit_env(6);
        let n = 5;
        let r = first_passage_time(&env, &v2(0, 0), &v2(n, 0)).unwrap();
        assert_eq!(r.value, Weight::from_int(n));
        assert_eq!(r.one_geodesic.len(), n as usize);
        assert!(r.certified);
    }

    #[test]
    fn symmetry_and_triangle_inequality() {
        let env = atoms_env(5, vec![-3, -3], vec![5, 5]);
        let pts = [v2(0, 0), v2(3, 1), v2(-1, 2), v2(4, -2)];
        for a in &pts {
            let da = shortest_paths(&env, a).unwrap();
            for b in &pts {
                let db = shortest_paths(&env, b).unwrap();
                assert_eq!(da.get(b), db.get(a));
                for c in &pts {
                    let ab = da.get(b).unwrap().clone();
                    let bc = db.get(c).unwrap().clone();
                    let ac = da.get(c).unwrap().clone();
                    assert!(ac <= ab + &bc);
                }
            }
        }
    }

    #[test]
    fn margin_formula_matches_hand_cases() {
        // unit weights: U = |v-w|_1, so F^-*(N + 2) > N already at M = 0
        let env = unit_env(6);
        assert_eq!(compute_safe_margin(&env, &v2(0, 0), &v2(4, 0)).unwrap(), 0);
        // forced weight-2 straight path: U = 2N, need N + 2M + 2 > 2N
        let env = atoms_env(0, vec![-8, -8], vec![16, 8]);
        let n = 6i64;
        let straight = straight_path(&v2(0, 0), &v2(n, 0));
        let pairs: Vec<(Edge, Weight)> =
            straight.edges().map(|e| (e, Weight::from_int(2))).collect();
        let env2 = env.with_overrides(&pairs).unwrap();
        let m = compute_safe_margin(&env2, &v2(0, 0), &v2(n, 0)).unwrap();
        assert!(n + 2 * m + 2 > 2 * n);
        assert!(n + 2 * (m - 1) + 2 <= 2 * n);
        // zero infimum has no certificate
        let spec =
            DistributionSpec::atoms(2, vec![(rat_int(0), rat(3, 10)), (rat_int(1), rat(7, 10))]);
        let env0 =
            sample_environment(&spec, &Region::new(vec![-2, -2], vec![6, 6]).unwrap(), 1).unwrap();
        assert_eq!(
            compute_safe_margin(&env0, &v2(0, 0), &v2(3, 0)),
            Err(FppError::NoCertificate)
        );
    }

    #[test]
    fn unit_square_has_two_geodesics_and_no_pivotal_edge() {
        let env = unit_env(4);
        let set = enumerate_geodesics(&env, &v2(0, 0), &v2(1, 1), 100).unwrap();
        assert_eq!(set.count, GeodesicCount::Exact(BigUint::from(2u32)));
        assert_eq!(set.union_edges.len(), 4);
        assert!(set.pivotal_edges.is_empty());
        assert_eq!(
            count_geodesics_dp(&env, &v2(0, 0), &v2(1, 1)).unwrap(),
            BigUint::from(2u32)
        );
        assert_eq!(union_edges(&env, &v2(0, 0), &v2(1, 1)).unwrap().len(), 4);
        assert!(pivotal_edges(&env, &v2(0, 0), &v2(1, 1)).unwrap().is_empty());
    }

    #[test]
    fn straight_line_is_the_unique_geodesic() {
        let env = unit_env(5);
        let set = enumerate_geodesics(&env, &v2(0, 0), &v2(4, 0), 100).unwrap();
        assert_eq!(set.count, GeodesicCount::Exact(BigUint::one()));
        assert_eq!(set.union_edges.len(), 4);
        assert_eq!(set.pivotal_edges, set.union_edges);
        let piv = pivotal_edges(&env, &v2(0, 0), &v2(4, 0)).unwrap();
        assert_eq!(piv, set.union_edges);
    }

    #[test]
    fn tiny_caps_mark_saturation_and_upper_bounds() {
        let env = unit_env(4);
        let (v, w) = (v2(0, 0), v2(2, 2));
        let set = enumerate_geodesics(&env, &v, &w, 2).unwrap();
        assert_eq!(set.count, GeodesicCount::Saturated);
        assert_eq!(set.sample_paths.len(), 2);
        // a starved attached search reports its incumbent as an upper bound
        let res =
            attached_first_passage_time(&env, &v, &w, &AttachedParams::new(rat(1, 100)), 3)
                .unwrap();
        assert!(res.cap_hit);
        let exact =
            attached_first_passage_time(&env, &v, &w, &AttachedParams::new(rat(1, 100)), 1_000_000)
                .unwrap();
        assert!(!exact.cap_hit);
        assert!(res.value >= exact.value);
    }

    #[test]
    fn monotone_count_matches_binomials() {
        let env = unit_env(5);
        assert_eq!(
            count_geodesics_dp(&env, &v2(0, 0), &v2(2, 1)).unwrap(),
            BigUint::from(3u32)
        );
        assert_eq!(
            count_geodesics_dp(&env, &v2(0, 0), &v2(2, 2)).unwrap(),
            BigUint::from(6u32)
        );
    }

    #[test]
    fn zero_weights_are_rejected_by_the_dag_counter() {
        let spec =
            DistributionSpec::atoms(2, vec![(rat_int(0), rat(1, 2)), (rat_int(1), rat(1, 2))]);
        let env =
            sample_environment(&spec, &Region::new(vec![-1, -1], vec![4, 4]).unwrap(), 3).unwrap();
        assert_eq!(
            count_geodesics_dp(&env, &v2(0, 0), &v2(2, 0)),
            Err(FppError::ZeroWeightPresent)
        );
        // enumeration still works
        let set = enumerate_geodesics(&env, &v2(0, 0), &v2(2, 0), 10_000).unwrap();
        assert!(set.count.exact().is_some());
    }

    #[test]
    fn blocked_overrides_can_disconnect() {
        let env = unit_env(2);
        let w = v2(2, 2);
        let mut pairs = Vec::new();
        for e in env.edges() {
            if e.touches(&w) {
                pairs.push((e.clone(), Weight::Blocked));
            }
        }
        let blocked = env.with_overrides(&pairs).unwrap();
        assert_eq!(
            first_passage_time(&blocked, &v2(0, 0), &w).err(),
            Some(FppError::Disconnected)
        );
    }

    #[test]
    fn deleting_a_non_union_edge_keeps_the_value() {
        let env = atoms_env(11, vec![-4, -4], vec![8, 4]);
        let (v, w) = (v2(0, 0), v2(4, 0));
        let t = first_passage_time(&env, &v, &w).unwrap().value;
        let union = union_edges(&env, &v, &w).unwrap();
        let spare = env
            .edges()
            .into_iter()
            .find(|e| !union.contains(e) && !e.touches(&v) && !e.touches(&w))
            .unwrap();
        let blocked = env.with_overrides(&[(spare, Weight::Blocked)]).unwrap();
        assert_eq!(first_passage_time(&blocked, &v, &w).unwrap().value, t);
        // raising any single edge never decreases the value
        for e in env.edges().into_iter().take(30) {
            let raised = env.with_overrides(&[(e, Weight::from_int(50))]).unwrap();
            assert!(first_passage_time(&raised, &v, &w).unwrap().value >= t);
        }
    }

    #[test]
    fn attached_time_reduces_to_plain_at_beta_zero() {
        let env = atoms_env(21, vec![-2, -2], vec![6, 2]);
        let (v, w) = (v2(0, 0), v2(3, 0));
        let plain = first_passage_time(&env, &v, &w).unwrap().value;
        let res =
            attached_first_passage_time(&env, &v, &w, &AttachedParams::new(Rat::zero()), 1_000_000)
                .unwrap();
        assert!(!res.cap_hit);
        assert_eq!(res.value, plain);
    }

    #[test]
    fn straight_path_avoids_surcharge_entirely() {
        let env = unit_env(5);
        let (v, w) = (v2(0, 0), v2(4, 0));
        let res =
            attached_first_passage_time(&env, &v, &w, &AttachedParams::new(rat(1, 100)), 1_000_000)
                .unwrap();
        assert_eq!(res.value, Weight::from_int(4));
        assert_eq!(res.optimizers.len(), 1);
        assert_eq!(res.optimizers[0].len(), 4);
    }

    #[test]
    fn resampling_swaps_exactly_the_boxed_edges() {
        let spec =
            DistributionSpec::atoms(2, vec![(rat_int(1), rat(1, 2)), (rat_int(2), rat(1, 2))]);
        let bounds = Region::new(vec![-4, -4], vec![8, 4]).unwrap();
        let env = sample_environment(&spec, &bounds, 1).unwrap();
        let env_star = sample_environment(&spec, &bounds, 2).unwrap();
        let block = Region::new(vec![1, -1], vec![3, 1]).unwrap();
        let res = resample_box(&env, &env_star, &block).unwrap();
        let mut changed = 0usize;
        let mut meets = 0usize;
        for e in env.edges() {
            let touches = block.contains(&e.lo) || block.contains(&e.hi());
            if touches {
                meets += 1;
                assert_eq!(res.weight(&e).unwrap(), env_star.weight(&e).unwrap());
            } else {
                assert_eq!(res.weight(&e).unwrap(), env.weight(&e).unwrap());
            }
            if res.weight(&e).unwrap() != env.weight(&e).unwrap() {
                changed += 1;
            }
        }
        assert!(changed <= meets);
        // resampling with itself is the identity
        let same = resample_box(&env, &env, &block).unwrap();
        for e in env.edges() {
            assert_eq!(same.weight(&e).unwrap(), env.weight(&e).unwrap());
        }
        // disjoint block changes nothing
        let far = Region::new(vec![50, 50], vec![55, 55]).unwrap();
        let untouched = resample_box(&env, &env_star, &far).unwrap();
        for e in env.edges() {
            assert_eq!(untouched.weight(&e).unwrap(), env.weight(&e).unwrap());
        }
    }

    #[test]
    fn point_mass_satisfies_the_pattern_condition() {
        // all weights alpha and F^-_M = F^+_M = alpha: every clause forced
        let spec = DistributionSpec::atoms(2, vec![(rat_int(1), rat_int(1))]);
        let bounds = Region::new(vec![-2, -2], vec![6, 6]).unwrap();
        let env = sample_environment(&spec, &bounds, 0).unwrap();
        let gamma = LatticePath::parse("0,0 1,0 1,1 2,1").unwrap();
        let block = Region::new(vec![0, 0], vec![3, 3]).unwrap();
        let mb = m_bounds(&env, &rat_int(10));
        assert_eq!(mb.f_minus_m, rat_int(1));
        assert_eq!(mb.f_plus_m, rat_int(1));
        assert!(gamma_b_condition(&env, &gamma, &block, &rat_int(1), &mb).unwrap());
        // alpha that is not an atom is rejected
        assert_eq!(
            gamma_b_condition(&env, &gamma, &block, &rat(1, 3), &mb),
            Err(FppError::AlphaNotAtom)
        );
    }

    #[test]
    fn violating_one_clause_fails_the_pattern_condition() {
        let spec =
            DistributionSpec::atoms(2, vec![(rat_int(1), rat(1, 2)), (rat_int(2), rat(1, 2))]);
        let bounds = Region::new(vec![-2, -2], vec![6, 6]).unwrap();
        let env = sample_environment(&spec, &bounds, 0).unwrap();
        let gamma = LatticePath::parse("0,0 1,0 1,1 2,1").unwrap();
        let block = Region::new(vec![0, 0], vec![3, 3]).unwrap();
        let mb = m_bounds(&env, &rat_int(10));
        // plant the full pattern, then break a single turn edge
        let mut pairs: Vec<(Edge, Weight)> = Vec::new();
        for e in env.edges() {
            if block.contains(&e.lo) || block.contains(&e.hi()) {
                pairs.push((e, Weight::from_int(2)));
            }
        }
        let forced = env.with_overrides(&pairs).unwrap();
        let vs: Vec<Vertex> = gamma.vertices().to_vec();
        let turn_fix: Vec<(Edge, Weight)> = vec![
            (Edge::new(&vs[0], &vs[1]).unwrap(), Weight::from_int(1)),
            (Edge::new(&vs[1], &vs[2]).unwrap(), Weight::from_int(1)),
            (Edge::new(&vs[0], &v2(0, 1)).unwrap(), Weight::from_int(1)),
            (Edge::new(&v2(0, 1), &vs[2]).unwrap(), Weight::from_int(1)),
            (Edge::new(&vs[2], &vs[3]).unwrap(), Weight::from_int(1)),
            (Edge::new(&vs[1], &v2(2, 0)).unwrap(), Weight::from_int(1)),
            (Edge::new(&v2(2, 0), &vs[3]).unwrap(), Weight::from_int(1)),
        ];
        let ok_env = forced.with_overrides(&turn_fix).unwrap();
        assert!(gamma_b_condition(&ok_env, &gamma, &block, &rat_int(1), &mb).unwrap());
        let broken = ok_env
            .with_overrides(&[(Edge::new(&vs[0], &vs[1]).unwrap(), Weight::from_int(2))])
            .unwrap();
        assert!(!gamma_b_condition(&broken, &gamma, &block, &rat_int(1), &mb).unwrap());
    }

    #[test]
    fn boundary_hits_find_entry_and_exit() {
        let block = Region::new(vec![2, -1], vec![4, 1]).unwrap();
        let p = LatticePath::parse("0,0 1,0 2,0 3,0 4,0 5,0 6,0").unwrap();
        let (st, fin) = boundary_hits(&p, &block).unwrap();
        assert_eq!(st, v2(1, 0));
        assert_eq!(fin, v2(5, 0));
        // touching at a single vertex
        let q = LatticePath::parse("1,0 0,0 0,1").unwrap();
        let (st, fin) = boundary_hits(&q, &block).unwrap();
        assert_eq!(st, v2(1, 0));
        assert_eq!(fin, v2(1, 0));
        let far = LatticePath::parse("-3,0 -3,1").unwrap();
        assert_eq!(boundary_hits(&far, &block), Err(FppError::NoHit));
    }
}
