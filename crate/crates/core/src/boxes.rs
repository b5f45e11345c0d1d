//! The cube system at scale n: small cubes, enlarged cubes and the slab
//! boxes between neighbouring enlarged cubes, with their classification
//! (black: well-behaved weights and no atypically fast interior pairs;
//! white: crossed by a geodesic in the short direction; gray: both), plus
//! coarse-graining diagnostics over the union of geodesics.

use crate::env::Environment;
use crate::error::{FppError, Result};
use crate::geodesics::{self, DistMap};
use crate::lattice::{Edge, Region, Vertex};
use crate::paths::LatticePath;
use crate::weight::{Rat, Weight};
use num::integer::Roots;
use num::{Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};

/// Which member of the cube system a box is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxKind {
    /// Half-open cube of side n at index l: [nl, n(l+1)) per axis.
    SCube,
    /// Enlarged cube: [nl - n, n(l+2)] per axis, side 3n+1.
    TCube,
    /// Intersection of two enlarged cubes two steps apart along one axis:
    /// a slab of width n+1 in the short direction, 3n+1 elsewhere.
    JBox,
}

/// A box of the scale-n cube system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NBox {
    pub kind: BoxKind,
    pub l: Vec<i64>,
    pub n: i64,
    /// Signed axis label for slab boxes: 1-based axis index, sign is the
    /// direction of the neighbouring enlarged cube.
    pub j: Option<i64>,
}

impl NBox {
    pub fn s_cube(l: Vec<i64>, n: i64) -> NBox {
        NBox {
            kind: BoxKind::SCube,
            l,
            n,
            j: None,
        }
    }

    pub fn t_cube(l: Vec<i64>, n: i64) -> NBox {
        NBox {
            kind: BoxKind::TCube,
            l,
            n,
            j: None,
        }
    }

    /// Slab between T(l) and T(l + 2 sgn(j) e_|j|); `j` in {±1, ..., ±d}.
    pub fn j_box(l: Vec<i64>, n: i64, j: i64) -> Result<NBox> {
        let d = l.len() as i64;
        if j == 0 || j.abs() > d {
            return Err(FppError::InvalidConfig(format!(
                "axis label {j} out of range for dimension {d}"
            )));
        }
        Ok(NBox {
            kind: BoxKind::JBox,
            l,
            n,
            j: Some(j),
        })
    }

    /// The 0-based short axis of a slab box.
    pub fn short_axis(&self) -> Option<usize> {
        self.j.map(|j| (j.unsigned_abs() as usize) - 1)
    }

    pub fn region(&self) -> Region {
        let n = self.n;
        match self.kind {
            BoxKind::SCube => Region {
                lo: self.l.iter().map(|l| n * l).collect(),
                hi: self.l.iter().map(|l| n * (l + 1) - 1).collect(),
            },
            BoxKind::TCube => Region {
                lo: self.l.iter().map(|l| n * l - n).collect(),
                hi: self.l.iter().map(|l| n * (l + 2)).collect(),
            },
            BoxKind::JBox => {
                let j = self.j.expect("slab boxes carry an axis label");
                let axis = (j.unsigned_abs() as usize) - 1;
                let mut lo: Vec<i64> = self.l.iter().map(|l| n * l - n).collect();
                let mut hi: Vec<i64> = self.l.iter().map(|l| n * (l + 2)).collect();
                if j > 0 {
                    lo[axis] = n * self.l[axis] + n;
                } else {
                    hi[axis] = n * self.l[axis];
                }
                Region { lo, hi }
            }
        }
    }

    /// The two large faces of a slab box: vertex rows at the extreme
    /// short-axis coordinates.
    pub fn large_faces(&self) -> Result<(Region, Region)> {
        let axis = self.short_axis().ok_or(FppError::WrongKind {
            expected: "slab box",
        })?;
        let r = self.region();
        let mut low = r.clone();
        low.hi[axis] = r.lo[axis];
        let mut high = r;
        high.lo[axis] = high.hi[axis];
        Ok((low, high))
    }
}

/// All slab boxes surrounding the enlarged cube of index `l`: both signs of
/// every axis.
pub fn surrounding_j_boxes(l: &[i64], n: i64) -> Vec<NBox> {
    let d = l.len() as i64;
    let mut out = Vec::new();
    for axis in 1..=d {
        for sign in [-1i64, 1] {
            out.push(NBox::j_box(l.to_vec(), n, sign * axis).expect("axis label in range"));
        }
    }
    out
}

/// Outcome of the black/white/gray classification of one box.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BoxClassification {
    pub black: Option<bool>,
    /// None when geodesic enumeration saturated and crossing is undecidable.
    pub white: Option<bool>,
    pub gray: Option<bool>,
    pub g_turn_box: Option<bool>,
    pub failing_condition: Option<BlackCondition>,
}

/// Which blackness clause failed first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlackCondition {
    /// Some well-separated interior pair is atypically fast.
    FastPair,
    /// Some edge meeting the box exceeds the weight bound M.
    HeavyEdge,
    /// Some edge meeting the box is within 1/M of the bounded supremum.
    NearSupremum,
}

impl std::fmt::Display for BlackCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BlackCondition::FastPair => write!(f, "cond1"),
            BlackCondition::HeavyEdge => write!(f, "cond2"),
            BlackCondition::NearSupremum => write!(f, "cond3"),
        }
    }
}

/// Decides blackness of a box.
///
/// Condition 1: every pair v, w in the box with |v-w|_1 at least n^(1/3)
/// has t(v,w) >= (F^- + delta1)|v-w|_1, with t certified by a margin box
/// around the pair. Condition 2: every edge meeting the box has weight at
/// most M. Condition 3: every such weight is at most F^+ - 1/M. Which
/// conditions apply depends on whether F^+ is finite and carries mass.
pub fn classify_black(
    env: &Environment,
    nbox: &NBox,
    delta1: &Rat,
    m_bound: &Rat,
) -> Result<BoxClassification> {
    let spec = env.spec();
    let stats = spec.derived_stats();
    let region = nbox.region();
    if !env.bounds().contains_region(&region) {
        // weights and interior distances beyond the environment are unknown
        return Err(FppError::UncertifiedFpt);
    }

    // weight scan over edges meeting the box
    let mut heavy = false;
    let mut near_sup = false;
    let m_weight = Weight::Finite(m_bound.clone());
    let sup_gap = stats
        .f_plus
        .as_ref()
        .map(|fp| Weight::Finite(fp - m_bound.recip()));
    for e in env.edges() {
        if !(region.contains(&e.lo) || region.contains(&e.hi())) {
            continue;
        }
        let w = env.weight(&e)?;
        if w > m_weight {
            heavy = true;
        }
        if let Some(gap) = &sup_gap {
            if w > *gap {
                near_sup = true;
            }
        }
    }

    let cond1 = check_fast_pairs(env, &region, nbox.n, &stats.f_minus, delta1)?;

    let atom_at_sup = match &stats.f_plus {
        Some(fp) => spec.prob_at(fp).is_positive(),
        None => false,
    };
    let (black, failing) =
        black_verdict(stats.f_plus.is_some(), atom_at_sup, cond1, heavy, near_sup);
    Ok(BoxClassification {
        black: Some(black),
        white: None,
        gray: None,
        g_turn_box: None,
        failing_condition: failing,
    })
}

/// The three-case blackness table keyed on whether the supremum of the
/// support is finite and whether it carries mass.
fn black_verdict(
    f_plus_finite: bool,
    atom_at_sup: bool,
    cond1: bool,
    heavy: bool,
    near_sup: bool,
) -> (bool, Option<BlackCondition>) {
    if !cond1 {
        return (false, Some(BlackCondition::FastPair));
    }
    match (f_plus_finite, atom_at_sup) {
        // unbounded support: conditions 1 and 2
        (false, _) if heavy => (false, Some(BlackCondition::HeavyEdge)),
        // bounded, no mass at the supremum: conditions 1 and 3
        (true, false) if near_sup => (false, Some(BlackCondition::NearSupremum)),
        // bounded with mass at the supremum: condition 1 alone
        _ => (true, None),
    }
}

/// Condition 1 of blackness: no atypically fast well-separated pair.
///
/// Pairs are restricted to the box as written; distances are certified by
/// computing within the pairwise margin box, all sourced from multi-source
/// runs cached per source vertex.
fn check_fast_pairs(
    env: &Environment,
    region: &Region,
    n: i64,
    f_minus: &Rat,
    delta1: &Rat,
) -> Result<bool> {
    let min_sep = n.max(1).cbrt().max(1);
    let speed = f_minus + delta1;
    if speed.is_zero() {
        // degenerate blackness: t >= 0 always
        return Ok(true);
    }
    // worst-case margin for any pair in the box, from the heaviest straight
    // path; one enlarged Dijkstra region then serves every pair
    let vertices: Vec<Vertex> = region.iter_vertices().collect();
    let mut worst_margin = 0i64;
    if f_minus.is_zero() {
        return Err(FppError::UncertifiedFpt);
    }
    for v in &vertices {
        for w in &vertices {
            if v < w && v.l1_dist(w) >= min_sep {
                let m = geodesics::compute_safe_margin(env, v, w)?;
                worst_margin = worst_margin.max(m);
            }
        }
    }
    let enlarged = region.grown(worst_margin);
    if !env.bounds().contains_region(&enlarged) {
        return Err(FppError::UncertifiedFpt);
    }
    let mut cache: BTreeMap<Vertex, DistMap> = BTreeMap::new();
    for v in &vertices {
        for w in &vertices {
            if !(v < w) || v.l1_dist(w) < min_sep {
                continue;
            }
            if !cache.contains_key(v) {
                cache.insert(v.clone(), geodesics::shortest_paths(env, v)?);
            }
            let dist = &cache[v];
            let t = dist.get(w).cloned().ok_or(FppError::Disconnected)?;
            let floor = Weight::Finite(&speed * Rat::from_integer(v.l1_dist(w).into()));
            if t < floor {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// True iff some maximal in-box segment of the path connects the two
/// opposite large faces of the slab.
pub fn crosses_short(p: &LatticePath, nbox: &NBox) -> Result<bool> {
    if nbox.kind != BoxKind::JBox {
        return Err(FppError::WrongKind {
            expected: "slab box",
        });
    }
    let region = nbox.region();
    let axis = nbox.short_axis().expect("slab boxes carry an axis label");
    let (lo_face, hi_face) = (region.lo[axis], region.hi[axis]);
    let mut touched_lo = false;
    let mut touched_hi = false;
    for v in p.vertices() {
        if region.contains(v) {
            touched_lo |= v.0[axis] == lo_face;
            touched_hi |= v.0[axis] == hi_face;
            if touched_lo && touched_hi {
                return Ok(true);
            }
        } else {
            touched_lo = false;
            touched_hi = false;
        }
    }
    Ok(false)
}

/// Adds white/gray verdicts from an enumerated geodesic family.
pub fn classify_white_gray(
    nbox: &NBox,
    geos: &crate::geodesics::GeodesicSet,
    mut classification: BoxClassification,
) -> Result<BoxClassification> {
    let mut white = false;
    for p in &geos.sample_paths {
        if crosses_short(p, nbox)? {
            white = true;
            break;
        }
    }
    if !white && geos.count == crate::geodesics::GeodesicCount::Saturated {
        // a crossing geodesic may exist beyond the cap
        classification.white = None;
        classification.gray = None;
        return Ok(classification);
    }
    classification.white = Some(white);
    classification.gray = Some(white && classification.black == Some(true));
    Ok(classification)
}

/// True iff every attached-time optimizer has a G-turn vertex inside the
/// box. Requires the complete optimizer set.
pub fn is_g_turn_box(
    env: &Environment,
    nbox: &NBox,
    attached: &crate::geodesics::AttachedResult,
) -> Result<bool> {
    if attached.cap_hit {
        return Err(FppError::CapExceeded(attached.explored));
    }
    let region = nbox.region();
    for p in &attached.optimizers {
        let turns = crate::paths::classify_turns(env, p)?;
        let has_inside = turns
            .g_turn_indices()
            .into_iter()
            .any(|i| region.contains(&p.vertices()[i]));
        if !has_inside {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Scale-k coarse-graining of the union of geodesics.
#[derive(Clone, Debug)]
pub struct CoarseGrainReport {
    /// High-weight union edges (weight strictly above alpha).
    pub high_edges: BTreeSet<Edge>,
    /// The union of geodesics, as edges.
    pub union_edges: BTreeSet<Edge>,
    /// Indices u of scale-k cubes meeting the union.
    pub covered_cubes: BTreeSet<Vec<i64>>,
    /// Covered cubes whose 3^d neighbourhood meets a high-weight edge.
    pub bad_cubes: BTreeSet<Vec<i64>>,
    pub bad_count: usize,
}

/// The half-open scale-k cube with corner k*u.
pub fn k_cube(u: &[i64], k: i64) -> Region {
    Region {
        lo: u.iter().map(|c| k * c).collect(),
        hi: u.iter().map(|c| k * c + k - 1).collect(),
    }
}

fn cube_index_of(v: &Vertex, k: i64) -> Vec<i64> {
    v.0.iter().map(|c| c.div_euclid(k)).collect()
}

/// Classifies scale-k cubes against the union of geodesics: a covered cube
/// is bad when its 3^d cube neighbourhood meets a high-weight union edge.
pub fn coarse_grain(
    env: &Environment,
    v: &Vertex,
    w: &Vertex,
    alpha: &Rat,
    k: i64,
) -> Result<CoarseGrainReport> {
    if k <= 0 {
        return Err(FppError::InvalidConfig("coarse scale must be positive".into()));
    }
    let union = geodesics::union_edges(env, v, w)?;
    let alpha_w = Weight::Finite(alpha.clone());
    let mut high = BTreeSet::new();
    for e in &union {
        if env.weight(e)? > alpha_w {
            high.insert(e.clone());
        }
    }
    let mut covered: BTreeSet<Vec<i64>> = BTreeSet::new();
    for e in &union {
        covered.insert(cube_index_of(&e.lo, k));
        covered.insert(cube_index_of(&e.hi(), k));
    }
    // cube indices whose 3^d neighbourhood contains a high edge endpoint
    let mut high_neighbourhoods: BTreeSet<Vec<i64>> = BTreeSet::new();
    let d = env.dim();
    for e in &high {
        for end in [e.lo.clone(), e.hi()] {
            let base = cube_index_of(&end, k);
            let mut stack = vec![Vec::new()];
            for coord in base.iter().take(d) {
                let mut next = Vec::new();
                for partial in stack {
                    for delta in -1..=1 {
                        let mut p: Vec<i64> = partial.clone();
                        p.push(coord + delta);
                        next.push(p);
                    }
                }
                stack = next;
            }
            high_neighbourhoods.extend(stack);
        }
    }
    let bad_cubes: BTreeSet<Vec<i64>> = covered
        .iter()
        .filter(|u| high_neighbourhoods.contains(*u))
        .cloned()
        .collect();
    Ok(CoarseGrainReport {
        bad_count: bad_cubes.len(),
        high_edges: high,
        union_edges: union,
        covered_cubes: covered,
        bad_cubes,
    })
}

/// The environment with every in-box weight raised by 1 when it strictly
/// exceeds alpha.
pub fn modified_weights(env: &Environment, alpha: &Rat) -> Result<Environment> {
    let alpha_w = Weight::Finite(alpha.clone());
    let one = Rat::from_integer(1.into());
    let mut pairs = Vec::new();
    for e in env.edges() {
        let w = env.weight(&e)?;
        if w > alpha_w {
            if let Weight::Finite(r) = w {
                pairs.push((e, Weight::Finite(r + &one)));
            }
        }
    }
    env.with_overrides(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_environment, DistributionSpec};
    use crate::geodesics::enumerate_geodesics;
    use crate::weight::{rat, rat_int};

    fn v2(x: i64, y: i64) -> Vertex {
        Vertex::new(vec![x, y])
    }

    #[test]
    fn cube_system_geometry() {
        let n = 4;
        let s = NBox::s_cube(vec![0, 0], n).region();
        let t = NBox::t_cube(vec![0, 0], n).region();
        assert_eq!(s, Region::new(vec![0, 0], vec![3, 3]).unwrap());
        assert_eq!(t, Region::new(vec![-4, -4], vec![8, 8]).unwrap());
        assert!(t.contains_region(&s));

        let jp = NBox::j_box(vec![0, 0], n, 1).unwrap().region();
        assert_eq!(jp, Region::new(vec![4, -4], vec![8, 8]).unwrap());
        assert_eq!(jp.side(0), n + 1);
        assert_eq!(jp.side(1), 3 * n + 1);
        let jm = NBox::j_box(vec![0, 0], n, -2).unwrap().region();
        assert_eq!(jm, Region::new(vec![-4, -4], vec![8, 0]).unwrap());
        assert_eq!(jm.side(1), n + 1);
        assert!(NBox::j_box(vec![0, 0], n, 3).is_err());
        assert_eq!(surrounding_j_boxes(&[0, 0], n).len(), 4);
    }

    #[test]
    fn crossing_needs_an_inside_segment_between_large_faces() {
        let n = 2;
        let b = NBox::j_box(vec![0, 0], n, 1).unwrap();
        // region [2,-2]..[4,4]: short axis 0
        let across = LatticePath::parse("1,0 2,0 3,0 4,0 5,0").unwrap();
        assert!(crosses_short(&across, &b).unwrap());
        let outside = LatticePath::parse("0,0 0,1 0,2").unwrap();
        assert!(!crosses_short(&outside, &b).unwrap());
        // enters and leaves through the same large face
        let bounce = LatticePath::parse("1,0 2,0 2,1 1,1").unwrap();
        assert!(!crosses_short(&bounce, &b).unwrap());
        // leaves the slab between the two face visits: no single segment
        let re_enter = LatticePath::parse("2,4 2,5 3,5 4,5 4,4 4,3").unwrap();
        assert!(!crosses_short(&re_enter, &b).unwrap());
        let s_cube = NBox::s_cube(vec![0, 0], n);
        assert!(crosses_short(&across, &s_cube).is_err());
    }

    #[test]
    fn point_mass_is_black_only_at_degenerate_delta() {
        // t(v,w) = |v-w| exactly, so condition 1 fails for any delta1 > 0
        let spec = DistributionSpec::atoms(2, vec![(rat_int(1), rat_int(1))]);
        let bounds = Region::new(vec![-14, -14], vec![14, 14]).unwrap();
        let env = sample_environment(&spec, &bounds, 0).unwrap();
        let b = NBox::j_box(vec![0, 0], 2, 1).unwrap();
        let with_delta = classify_black(&env, &b, &rat(1, 10), &rat_int(100)).unwrap();
        assert_eq!(with_delta.black, Some(false));
        assert_eq!(with_delta.failing_condition, Some(BlackCondition::FastPair));
        let degenerate = classify_black(&env, &b, &Rat::zero(), &rat_int(100)).unwrap();
        assert_eq!(degenerate.black, Some(true));
    }

    #[test]
    fn two_atom_law_is_black_at_delta_zero() {
        // t >= |v-w| always, and mass sits at the supremum: condition 1 only
        let spec =
            DistributionSpec::atoms(2, vec![(rat_int(1), rat(1, 2)), (rat_int(2), rat(1, 2))]);
        let bounds = Region::new(vec![-14, -14], vec![14, 14]).unwrap();
        let env = sample_environment(&spec, &bounds, 42).unwrap();
        let b = NBox::j_box(vec![0, 0], 2, 1).unwrap();
        let c = classify_black(&env, &b, &Rat::zero(), &rat_int(100)).unwrap();
        assert_eq!(c.black, Some(true));
        assert_eq!(c.failing_condition, None);
    }

    #[test]
    fn white_and_gray_follow_enumerated_crossings() {
        let spec = DistributionSpec::atoms(2, vec![(rat_int(1), rat_int(1))]);
        let bounds = Region::new(vec![-14, -14], vec![20, 14]).unwrap();
        let env = sample_environment(&spec, &bounds, 0).unwrap();
        let (v, w) = (v2(0, 0), v2(9, 0));
        let geos = enumerate_geodesics(&env, &v, &w, 100).unwrap();
        // slab [2,-2]..[4,4] straddles the unique straight geodesic
        let b = NBox::j_box(vec![0, 0], 2, 1).unwrap();
        let black = classify_black(&env, &b, &Rat::zero(), &rat_int(100)).unwrap();
        let c = classify_white_gray(&b, &geos, black).unwrap();
        assert_eq!(c.white, Some(true));
        assert_eq!(c.gray, Some(true));
        // a slab far from the corridor is not white
        let far = NBox::j_box(vec![0, 3], 2, 1).unwrap();
        let black_far = classify_black(&env, &far, &Rat::zero(), &rat_int(100)).unwrap();
        let c_far = classify_white_gray(&far, &geos, black_far).unwrap();
        assert_eq!(c_far.white, Some(false));
        assert_eq!(c_far.gray, Some(false));
    }

    #[test]
    fn g_turn_box_demands_every_optimizer() {
        let spec = DistributionSpec::atoms(2, vec![(rat_int(1), rat_int(1))]);
        let bounds = Region::new(vec![-6, -6], vec![10, 6]).unwrap();
        let env = sample_environment(&spec, &bounds, 0).unwrap();
        let params = crate::paths::AttachedParams::new(rat(1, 100));
        let res =
            crate::geodesics::attached_first_passage_time(&env, &v2(0, 0), &v2(4, 0), &params, 1_000_000)
                .unwrap();
        // the unique optimizer is the straight turn-free path
        let b = NBox::j_box(vec![0, 0], 2, 1).unwrap();
        assert!(!is_g_turn_box(&env, &b, &res).unwrap());
    }

    #[test]
    fn coarse_grain_covers_and_flags() {
        let spec = DistributionSpec::atoms(2, vec![(rat_int(1), rat_int(1))]);
        let bounds = Region::new(vec![-4, -4], vec![10, 4]).unwrap();
        let env = sample_environment(&spec, &bounds, 0).unwrap();
        let (v, w) = (v2(0, 0), v2(6, 0));
        // alpha at the supremum: no high edges, nothing bad
        let rep = coarse_grain(&env, &v, &w, &rat_int(1), 2).unwrap();
        assert!(rep.high_edges.is_empty());
        assert_eq!(rep.bad_count, 0);
        // alpha below the infimum: every union edge is high
        let rep = coarse_grain(&env, &v, &w, &rat(1, 2), 2).unwrap();
        assert_eq!(rep.high_edges, rep.union_edges);
        assert!(rep.bad_count > 0);
        // covering: each union edge endpoint lies in a covered cube
        for e in &rep.union_edges {
            for end in [e.lo.clone(), e.hi()] {
                let u = cube_index_of(&end, 2);
                assert!(rep.covered_cubes.contains(&u));
            }
        }
        assert!(rep.bad_cubes.is_subset(&rep.covered_cubes));
    }

    #[test]
    fn modified_weights_shift_high_edges_by_one() {
        let spec =
            DistributionSpec::atoms(2, vec![(rat_int(1), rat(1, 2)), (rat_int(2), rat(1, 2))]);
        let bounds = Region::new(vec![-2, -2], vec![6, 2]).unwrap();
        let env = sample_environment(&spec, &bounds, 9).unwrap();
        // alpha above the supremum: identical environment
        let same = modified_weights(&env, &rat_int(2)).unwrap();
        for e in env.edges() {
            assert_eq!(same.weight(&e).unwrap(), env.weight(&e).unwrap());
        }
        // point mass at 1 with alpha = 1/2: all weights become 2
        let unit = sample_environment(
            &DistributionSpec::atoms(2, vec![(rat_int(1), rat_int(1))]),
            &bounds,
            0,
        )
        .unwrap();
        let shifted = modified_weights(&unit, &rat(1, 2)).unwrap();
        for e in unit.edges() {
            assert_eq!(shifted.weight(&e).unwrap(), Weight::from_int(2));
        }
        let t = crate::geodesics::first_passage_time(&unit, &v2(0, 0), &v2(3, 0))
            .unwrap()
            .value;
        let t2 = crate::geodesics::first_passage_time(&shifted, &v2(0, 0), &v2(3, 0))
            .unwrap()
            .value;
        assert_eq!(t2, t.scaled(2));
    }

    #[test]
    fn black_verdict_table_is_monotone_in_m() {
        // growing M can only clear the heavy flag (condition 2 relaxes), so
        // in the unbounded regime black at M implies black at larger M
        for cond1 in [false, true] {
            let tight = black_verdict(false, false, cond1, true, false);
            let relaxed = black_verdict(false, false, cond1, false, false);
            assert!(!tight.0 || relaxed.0);
        }
        assert_eq!(
            black_verdict(false, false, true, true, false),
            (false, Some(BlackCondition::HeavyEdge))
        );
        assert_eq!(
            black_verdict(true, false, true, false, true),
            (false, Some(BlackCondition::NearSupremum))
        );
        // mass at the supremum: weight bounds are irrelevant
        assert_eq!(black_verdict(true, true, true, true, true), (true, None));
        assert_eq!(
            black_verdict(true, true, false, false, false),
            (false, Some(BlackCondition::FastPair))
        );
    }

    #[test]
    fn fine_laws_cannot_certify_fast_pairs_in_small_boxes() {
        // F^- = 1/100 blows the margin certificate past any desk box
        let spec = DistributionSpec::uniform_scaled(2, 1, 100, 100);
        let bounds = Region::new(vec![-10, -10], vec![14, 14]).unwrap();
        let env = sample_environment(&spec, &bounds, 4).unwrap();
        let b = NBox::j_box(vec![0, 0], 2, 1).unwrap();
        assert_eq!(
            classify_black(&env, &b, &Rat::zero(), &rat_int(10)),
            Err(FppError::UncertifiedFpt)
        );
    }
}
