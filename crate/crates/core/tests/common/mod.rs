//! Brute-force oracles shared by the integration and acceptance suites.
//!
//! Everything here recomputes results from first principles: depth-first
//! enumeration of self-avoiding paths with only the trivial straight-path
//! bound, and a standalone corner-swap tally. None of it calls the label
//! setting, DAG counting or branch-and-bound code it is used to check.

#![allow(dead_code)]

use fpp_core::env::{sample_environment, DistributionSpec, Environment};
use fpp_core::paths::LatticePath;
use fpp_core::weight::{rat, rat_int, Rat, Weight};
use fpp_core::{Edge, Region, Vertex};
use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

pub fn spec_12(d: usize) -> DistributionSpec {
    DistributionSpec::atoms(d, vec![(rat_int(1), rat(1, 2)), (rat_int(2), rat(1, 2))])
}

pub fn spec_01(d: usize) -> DistributionSpec {
    DistributionSpec::atoms(d, vec![(rat_int(0), rat(3, 10)), (rat_int(1), rat(7, 10))])
}

/// Uniform vertex of a region.
pub fn random_vertex(rng: &mut ChaCha8Rng, region: &Region) -> Vertex {
    let coords = (0..region.dim())
        .map(|a| {
            let side = region.side(a) as u64;
            region.lo[a] + (rng.next_u64() % side) as i64
        })
        .collect();
    Vertex::new(coords)
}

/// Two distinct random vertices.
pub fn random_pair(rng: &mut ChaCha8Rng, region: &Region) -> (Vertex, Vertex) {
    loop {
        let v = random_vertex(rng, region);
        let w = random_vertex(rng, region);
        if v != w {
            return (v, w);
        }
    }
}

/// Straight axis-ordered path time, summed directly from edge weights.
fn straight_time(env: &Environment, v: &Vertex, w: &Vertex) -> Weight {
    let mut cur = v.clone();
    let mut total = Weight::zero();
    for axis in 0..v.dim() {
        let sign = if w.0[axis] >= cur.0[axis] { 1 } else { -1 };
        while cur.0[axis] != w.0[axis] {
            let next = cur.step(axis, sign);
            let e = Edge::new(&cur, &next).expect("adjacent");
            total += &env.weight(&e).expect("straight path stays in the box");
            cur = next;
        }
    }
    total
}

/// Everything the exhaustive search found.
pub struct OracleOutcome {
    pub min_time: Weight,
    pub geodesics: Vec<LatticePath>,
    pub paths_seen: usize,
}

impl OracleOutcome {
    pub fn union_edges(&self) -> BTreeSet<Edge> {
        let mut out = BTreeSet::new();
        for p in &self.geodesics {
            out.extend(p.edges());
        }
        out
    }

    pub fn pivotal_edges(&self) -> BTreeSet<Edge> {
        let mut iter = self.geodesics.iter();
        let Some(first) = iter.next() else {
            return BTreeSet::new();
        };
        let mut acc: BTreeSet<Edge> = first.edges().collect();
        for p in iter {
            let edges: BTreeSet<Edge> = p.edges().collect();
            acc = acc.intersection(&edges).cloned().collect();
        }
        acc
    }
}

struct Dfs<'a> {
    env: &'a Environment,
    region: Region,
    target: Vertex,
    bound: Weight,
    prefix: Vec<Vertex>,
    visited: Vec<bool>,
    complete: Vec<(Weight, LatticePath)>,
}

impl Dfs<'_> {
    fn go(&mut self, time: Weight) {
        let cur = self.prefix.last().expect("prefix non-empty").clone();
        if cur == self.target {
            self.complete.push((
                time,
                LatticePath::new(self.prefix.clone()).expect("DFS steps are adjacent"),
            ));
            return;
        }
        for axis in 0..self.region.dim() {
            for sign in [-1i64, 1] {
                let next = cur.step(axis, sign);
                let Some(id) = self.region.index_of(&next) else {
                    continue;
                };
                if self.visited[id] {
                    continue;
                }
                let e = Edge::new(&cur, &next).expect("adjacent");
                let wt = self.env.weight(&e).expect("in-box edge");
                if wt.is_blocked() {
                    continue;
                }
                let t2 = time.clone() + &wt;
                // nothing slower than the straight path can be optimal
                if t2 > self.bound {
                    continue;
                }
                self.visited[id] = true;
                self.prefix.push(next);
                self.go(t2);
                self.prefix.pop();
                self.visited[id] = false;
            }
        }
    }
}

/// Exhaustive self-avoiding search for the minimum passage time and every
/// path attaining it, bounded only by the straight-path cost.
pub fn exhaustive_geodesics(env: &Environment, v: &Vertex, w: &Vertex) -> OracleOutcome {
    let region = env.bounds().clone();
    let bound = straight_time(env, v, w);
    let mut dfs = Dfs {
        env,
        region: region.clone(),
        target: w.clone(),
        bound,
        prefix: vec![v.clone()],
        visited: vec![false; region.vertex_count()],
        complete: Vec::new(),
    };
    dfs.visited[region.index_of(v).expect("in box")] = true;
    dfs.go(Weight::zero());
    let min_time = dfs
        .complete
        .iter()
        .map(|(t, _)| t.clone())
        .min()
        .expect("the straight path always completes");
    let geodesics = dfs
        .complete
        .iter()
        .filter(|(t, _)| *t == min_time)
        .map(|(_, p)| p.clone())
        .collect::<Vec<_>>();
    OracleOutcome {
        min_time,
        paths_seen: dfs.complete.len(),
        geodesics,
    }
}

/// Standalone corner tally: perpendicular steps, equal finite two-step
/// sums through the reflection, reflection off the path.
pub fn oracle_g_turn_count(env: &Environment, p: &LatticePath) -> usize {
    let vs = p.vertices();
    let mut count = 0;
    for i in 1..vs.len().saturating_sub(1) {
        let ain = vs[i - 1].0.iter().zip(&vs[i].0).position(|(a, b)| a != b);
        let aout = vs[i].0.iter().zip(&vs[i + 1].0).position(|(a, b)| a != b);
        if ain == aout {
            continue;
        }
        let star = Vertex::new(
            (0..vs[i].dim())
                .map(|a| vs[i - 1].0[a] + vs[i + 1].0[a] - vs[i].0[a])
                .collect(),
        );
        if vs.contains(&star) {
            continue;
        }
        let weights = [
            env.weight(&Edge::new(&vs[i - 1], &vs[i]).unwrap()),
            env.weight(&Edge::new(&vs[i], &vs[i + 1]).unwrap()),
            env.weight(&Edge::new(&vs[i - 1], &star).unwrap()),
            env.weight(&Edge::new(&star, &vs[i + 1]).unwrap()),
        ];
        let finite: Vec<Rat> = weights
            .iter()
            .filter_map(|w| w.as_ref().ok().and_then(|w| w.finite().cloned()))
            .collect();
        if finite.len() == 4 && finite[0].clone() + &finite[1] == finite[2].clone() + &finite[3] {
            count += 1;
        }
    }
    count
}

/// Exhaustive minimum of the attached time (plain time plus beta per
/// corner from the standalone tally) over self-avoiding paths.
pub fn exhaustive_attached(
    env: &Environment,
    v: &Vertex,
    w: &Vertex,
    beta: &Rat,
) -> (Weight, Vec<LatticePath>) {
    let region = env.bounds().clone();
    // a straight path has no corners, so its plain time bounds the optimum
    let bound = straight_time(env, v, w);
    let mut dfs = Dfs {
        env,
        region: region.clone(),
        target: w.clone(),
        bound,
        prefix: vec![v.clone()],
        visited: vec![false; region.vertex_count()],
        complete: Vec::new(),
    };
    dfs.visited[region.index_of(v).expect("in box")] = true;
    dfs.go(Weight::zero());
    let mut best: Option<Weight> = None;
    let mut optimizers: Vec<LatticePath> = Vec::new();
    for (t, p) in &dfs.complete {
        let surcharge = Rat::from_integer(oracle_g_turn_count(env, p).into()) * beta;
        let t_plus = t.clone() + Weight::Finite(surcharge);
        match &best {
            Some(b) if t_plus > *b => {}
            Some(b) if t_plus == *b => optimizers.push(p.clone()),
            _ => {
                best = Some(t_plus);
                optimizers = vec![p.clone()];
            }
        }
    }
    (best.expect("some path completes"), optimizers)
}

/// A sampled environment over an explicit box.
pub fn env_on(spec: &DistributionSpec, lo: Vec<i64>, hi: Vec<i64>, seed: u64) -> Environment {
    sample_environment(spec, &Region::new(lo, hi).unwrap(), seed).expect("valid spec")
}
