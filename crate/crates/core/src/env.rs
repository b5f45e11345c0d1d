//! Edge-weight environments on finite lattice boxes.
//!
//! An environment assigns an exact rational weight to every edge with at
//! least one endpoint in its box. Weights are i.i.d. draws from a
//! distribution spec under per-edge counter-mode seeding: the draw for an
//! edge depends only on (seed, canonical edge id), never on iteration
//! order, so the same (spec, box, seed) triple is bit-identical everywhere
//! and a box can be extended without re-drawing existing edges.

use crate::error::{FppError, Result};
use crate::lattice::{Edge, Region};
use crate::weight::{rat_int, rat_str, Rat, Weight};
use num::{BigInt, Integer, One, Signed, Zero};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

/// Critical probabilities for one dimension: plain and oriented percolation.
/// These are literature constants supplied through configuration; the tool
/// never estimates them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalProbs {
    #[serde(with = "crate::weight::rat_serde")]
    pub pc: Rat,
    #[serde(with = "crate::weight::rat_serde")]
    pub pc_directed: Rat,
}

/// The edge-weight law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Law {
    /// A finite list of (value, probability) atoms; probabilities sum to 1.
    Atoms(Vec<AtomEntry>),
    /// `k / denominator` with `k` uniform on `lo..=hi`. Stands in for a
    /// continuous uniform law while keeping every weight an exact rational.
    UniformScaledInt { lo: i64, hi: i64, denominator: i64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomEntry {
    #[serde(with = "crate::weight::rat_serde")]
    pub value: Rat,
    #[serde(with = "crate::weight::rat_serde")]
    pub prob: Rat,
}

/// Edge-weight distribution specification for dimension `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub d: usize,
    pub law: Law,
    /// dimension -> critical probabilities. `p_c(2) = 1/2` is installed by
    /// `default_pc_table`; anything else must come from the user.
    #[serde(default = "default_pc_table")]
    pub pc_table: BTreeMap<usize, CriticalProbs>,
}

pub fn default_pc_table() -> BTreeMap<usize, CriticalProbs> {
    let mut t = BTreeMap::new();
    t.insert(
        2,
        CriticalProbs {
            pc: Rat::new(BigInt::one(), BigInt::from(2)),
            // Oriented bond percolation on Z^2 has no exact threshold; this
            // is the conventional numerical value and callers may override.
            pc_directed: Rat::new(BigInt::from(6447), BigInt::from(10000)),
        },
    );
    t
}

/// F^-, F^+ and F(F^-) read off the law.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedStats {
    pub f_minus: Rat,
    /// `None` means the support is unbounded. Both built-in laws are
    /// bounded, so this is always `Some` today; the blackness tables still
    /// branch on it.
    pub f_plus: Option<Rat>,
    pub f_at_f_minus: Rat,
}

impl DistributionSpec {
    pub fn atoms(d: usize, atoms: Vec<(Rat, Rat)>) -> Self {
        DistributionSpec {
            d,
            law: Law::Atoms(
                atoms
                    .into_iter()
                    .map(|(value, prob)| AtomEntry { value, prob })
                    .collect(),
            ),
            pc_table: default_pc_table(),
        }
    }

    pub fn uniform_scaled(d: usize, lo: i64, hi: i64, denominator: i64) -> Self {
        DistributionSpec {
            d,
            law: Law::UniformScaledInt { lo, hi, denominator },
            pc_table: default_pc_table(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(FppError::InvalidDistribution(
                "dimension must be at least 2".into(),
            ));
        }
        match &self.law {
            Law::Atoms(atoms) => {
                if atoms.is_empty() {
                    return Err(FppError::InvalidDistribution("no atoms".into()));
                }
                let mut sum = Rat::zero();
                for a in atoms {
                    if a.value.is_negative() {
                        return Err(FppError::InvalidDistribution(format!(
                            "negative atom value {}",
                            rat_str(&a.value)
                        )));
                    }
                    if !a.prob.is_positive() {
                        return Err(FppError::InvalidDistribution(format!(
                            "non-positive atom probability {}",
                            rat_str(&a.prob)
                        )));
                    }
                    sum += &a.prob;
                }
                if !sum.is_one() {
                    return Err(FppError::InvalidDistribution(format!(
                        "atom probabilities sum to {}, not 1",
                        rat_str(&sum)
                    )));
                }
                let mut values: Vec<&Rat> = atoms.iter().map(|a| &a.value).collect();
                values.sort();
                if values.windows(2).any(|w| w[0] == w[1]) {
                    return Err(FppError::InvalidDistribution(
                        "atom values must be distinct".into(),
                    ));
                }
                // counter-mode sampling draws a uniform residue mod the lcm
                // of the probability denominators; it must fit in u64
                let _ = self.resolution()?;
            }
            Law::UniformScaledInt { lo, hi, denominator } => {
                if lo > hi {
                    return Err(FppError::InvalidDistribution("lo > hi".into()));
                }
                if *denominator <= 0 {
                    return Err(FppError::InvalidDistribution(
                        "denominator must be positive".into(),
                    ));
                }
                if *lo < 0 {
                    return Err(FppError::InvalidDistribution(
                        "negative weights are not allowed".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Number of equally likely residues a single draw is reduced to.
    fn resolution(&self) -> Result<u64> {
        match &self.law {
            Law::Atoms(atoms) => {
                let mut lcm = BigInt::one();
                for a in atoms {
                    lcm = lcm.lcm(a.prob.denom());
                }
                lcm.try_into().map_err(|_| {
                    FppError::InvalidDistribution(
                        "atom probability denominators too fine for 64-bit sampling".into(),
                    )
                })
            }
            Law::UniformScaledInt { lo, hi, .. } => Ok((hi - lo + 1) as u64),
        }
    }

    /// F^- = min support, F^+ = max support (or unbounded), F(F^-) = P(tau <= F^-).
    pub fn derived_stats(&self) -> DerivedStats {
        match &self.law {
            Law::Atoms(atoms) => {
                let f_minus = atoms.iter().map(|a| &a.value).min().unwrap().clone();
                let f_plus = atoms.iter().map(|a| &a.value).max().unwrap().clone();
                let f_at = self.cdf(&f_minus);
                DerivedStats {
                    f_minus,
                    f_plus: Some(f_plus),
                    f_at_f_minus: f_at,
                }
            }
            Law::UniformScaledInt { lo, hi, denominator } => {
                let den = rat_int(*denominator);
                let f_minus = rat_int(*lo) / den.clone();
                let f_plus = rat_int(*hi) / den;
                let f_at = self.cdf(&f_minus);
                DerivedStats {
                    f_minus,
                    f_plus: Some(f_plus),
                    f_at_f_minus: f_at,
                }
            }
        }
    }

    /// P(tau = x), exactly.
    pub fn prob_at(&self, x: &Rat) -> Rat {
        match &self.law {
            Law::Atoms(atoms) => atoms
                .iter()
                .find(|a| &a.value == x)
                .map(|a| a.prob.clone())
                .unwrap_or_else(Rat::zero),
            Law::UniformScaledInt { lo, hi, denominator } => {
                let scaled = x * rat_int(*denominator);
                if scaled.is_integer() {
                    let k: BigInt = scaled.to_integer();
                    if BigInt::from(*lo) <= k && k <= BigInt::from(*hi) {
                        return Rat::new(BigInt::one(), BigInt::from(hi - lo + 1));
                    }
                }
                Rat::zero()
            }
        }
    }

    /// P(tau <= x), exactly.
    pub fn cdf(&self, x: &Rat) -> Rat {
        match &self.law {
            Law::Atoms(atoms) => {
                let mut p = Rat::zero();
                for a in atoms {
                    if &a.value <= x {
                        p += &a.prob;
                    }
                }
                p
            }
            Law::UniformScaledInt { lo, hi, denominator } => {
                // count of k in lo..=hi with k/den <= x
                let scaled = x * rat_int(*denominator);
                let k_max = scaled.floor().to_integer();
                let lo = BigInt::from(*lo);
                let hi = BigInt::from(*hi);
                if k_max < lo {
                    Rat::zero()
                } else if k_max >= hi {
                    Rat::one()
                } else {
                    Rat::new(k_max - &lo + BigInt::one(), hi - lo + BigInt::one())
                }
            }
        }
    }

    /// Mean of the law (always finite for the built-in bounded laws).
    pub fn mean(&self) -> Rat {
        match &self.law {
            Law::Atoms(atoms) => atoms
                .iter()
                .map(|a| &a.value * &a.prob)
                .fold(Rat::zero(), |acc, x| acc + x),
            Law::UniformScaledInt { lo, hi, denominator } => {
                Rat::new(BigInt::from(lo + hi), BigInt::from(2 * denominator))
            }
        }
    }

    /// Usefulness test: E[tau] finite and F(F^-) below the (directed)
    /// percolation threshold for dimension d.
    pub fn is_useful(&self) -> Result<bool> {
        let stats = self.derived_stats();
        let probs = self
            .pc_table
            .get(&self.d)
            .ok_or(FppError::MissingCriticalProbability(self.d))?;
        let threshold = if stats.f_minus.is_zero() {
            &probs.pc
        } else {
            &probs.pc_directed
        };
        Ok(stats.f_at_f_minus < *threshold)
    }

    /// Default surcharge target: the largest atom strictly above F^- when
    /// one exists, else the median of the law. Both P(tau > alpha) > 0 and
    /// P(tau <= alpha) > 0 are then guaranteed for non-degenerate laws.
    pub fn default_alpha(&self) -> Rat {
        let stats = self.derived_stats();
        match &self.law {
            Law::Atoms(atoms) => {
                let mut above: Vec<&Rat> = atoms
                    .iter()
                    .map(|a| &a.value)
                    .filter(|v| **v > stats.f_minus)
                    .collect();
                above.sort();
                match above.len() {
                    0 => stats.f_minus.clone(),
                    // with a single extra atom, "largest above F^-" would be
                    // F^+ and P(tau > alpha) = 0; fall back to the next one
                    // down, which is F^- itself for two-atom laws
                    1 => {
                        let mut all: Vec<&Rat> = atoms.iter().map(|a| &a.value).collect();
                        all.sort();
                        all[all.len() - 2].clone()
                    }
                    n => above[n - 2].clone(),
                }
            }
            Law::UniformScaledInt { lo, hi, denominator } => {
                Rat::new(BigInt::from(lo + (hi - lo) / 2), BigInt::from(*denominator))
            }
        }
    }

    /// Draws one weight from the per-edge stream.
    fn draw(&self, rng: &mut ChaCha8Rng, resolution: u64) -> Weight {
        let u = uniform_below(rng, resolution);
        match &self.law {
            Law::Atoms(atoms) => {
                // cumulative thresholds as residues mod the lcm
                let lcm = BigInt::from(resolution);
                let mut acc = BigInt::zero();
                let u = BigInt::from(u);
                for a in atoms {
                    acc += a.prob.numer() * (&lcm / a.prob.denom());
                    if u < acc {
                        return Weight::Finite(a.value.clone());
                    }
                }
                // probabilities sum to one, so acc == lcm here
                Weight::Finite(atoms.last().unwrap().value.clone())
            }
            Law::UniformScaledInt { lo, denominator, .. } => {
                Weight::Finite(Rat::new(BigInt::from(lo + u as i64), BigInt::from(*denominator)))
            }
        }
    }
}

/// Rejection-free-in-expectation uniform draw in `0..n`.
fn uniform_below(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % n;
        }
    }
}

const MIX_CONST: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; used only to fold coordinates into a stream seed.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(MIX_CONST);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds (seed, canonical edge id) into the per-edge stream seed.
pub fn edge_stream_seed(seed: u64, e: &Edge) -> u64 {
    let mut h = splitmix64(seed ^ 0x45d9_f3b3_335b_369d);
    for &c in &e.lo.0 {
        h = splitmix64(h ^ (c as u64));
    }
    splitmix64(h ^ (e.axis as u64))
}

/// Derives a child seed for replica / independent-copy streams.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h = splitmix64(0x1234_5678_9abc_def0);
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

struct EnvBase {
    spec: DistributionSpec,
    bounds: Region,
    seed: u64,
    /// Edge store indexed by (lower endpoint in `store`, axis); covers all
    /// edges with at least one endpoint in `bounds`.
    store: Region,
    weights: Vec<Weight>,
}

/// An immutable sampled environment plus a sparse override layer.
///
/// Cloning is cheap: the base weight table is shared. Overrides shadow base
/// weights and may be BLOCKED.
#[derive(Clone)]
pub struct Environment {
    base: Arc<EnvBase>,
    overrides: HashMap<Edge, Weight>,
}

impl Environment {
    pub fn spec(&self) -> &DistributionSpec {
        &self.base.spec
    }

    pub fn bounds(&self) -> &Region {
        &self.base.bounds
    }

    pub fn seed(&self) -> u64 {
        self.base.seed
    }

    pub fn dim(&self) -> usize {
        self.base.bounds.dim()
    }

    pub fn overrides(&self) -> &HashMap<Edge, Weight> {
        &self.overrides
    }

    fn store_slot(&self, e: &Edge) -> Option<usize> {
        let d = self.dim();
        self.base
            .store
            .index_of(&e.lo)
            .map(|i| i * d + e.axis)
    }

    /// True iff the edge has at least one endpoint in the box.
    pub fn in_box(&self, e: &Edge) -> bool {
        self.base.bounds.touches_edge(e)
    }

    /// The weight of an in-box edge.
    pub fn weight(&self, e: &Edge) -> Result<Weight> {
        if !self.in_box(e) {
            return Err(FppError::EdgeOutOfBox(e.to_string()));
        }
        if let Some(w) = self.overrides.get(e) {
            return Ok(w.clone());
        }
        let slot = self
            .store_slot(e)
            .expect("in-box edge lower endpoint lies in the store region");
        Ok(self.base.weights[slot].clone())
    }

    /// All in-box edges in canonical sorted order.
    pub fn edges(&self) -> Vec<Edge> {
        let d = self.dim();
        let mut out = Vec::new();
        for v in self.base.store.iter_vertices() {
            for axis in 0..d {
                let e = Edge { lo: v.clone(), axis };
                if self.in_box(&e) {
                    out.push(e);
                }
            }
        }
        out.sort();
        out
    }

    /// A view identical to this environment except the listed edges take the
    /// listed weights.
    pub fn with_overrides(&self, pairs: &[(Edge, Weight)]) -> Result<Environment> {
        let mut env = self.clone();
        for (e, w) in pairs {
            if !env.in_box(e) {
                return Err(FppError::EdgeOutOfBox(e.to_string()));
            }
            env.overrides.insert(e.clone(), w.clone());
        }
        Ok(env)
    }

    /// Smallest in-box weight (overrides included); BLOCKED edges ignored.
    pub fn min_finite_weight(&self) -> Option<Rat> {
        let mut min: Option<Rat> = None;
        for e in self.edges() {
            if let Weight::Finite(w) = self.weight(&e).expect("enumerated edge is in-box") {
                min = Some(match min {
                    Some(m) if m <= w => m,
                    _ => w,
                });
            }
        }
        min
    }

    /// Text dump: header `d lo1..hi1 ... lod..hid seed`, then one line
    /// `v w num/den` per edge in canonical sorted order.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let dims: Vec<String> = (0..self.dim())
            .map(|a| format!("{}..{}", self.bounds().lo[a], self.bounds().hi[a]))
            .collect();
        let _ = writeln!(s, "{} {} {}", self.dim(), dims.join(" "), self.seed());
        for e in self.edges() {
            let w = self.weight(&e).expect("enumerated edge is in-box");
            let _ = writeln!(s, "{} {}", e, w);
        }
        s
    }
}

/// Samples an environment: deterministic in (spec, box, seed).
pub fn sample_environment(spec: &DistributionSpec, bounds: &Region, seed: u64) -> Result<Environment> {
    spec.validate()?;
    if bounds.dim() != spec.d {
        return Err(FppError::InvalidConfig(format!(
            "box dimension {} does not match spec dimension {}",
            bounds.dim(),
            spec.d
        )));
    }
    let resolution = spec.resolution()?;
    let store = bounds.grown(1);
    let d = spec.d;
    let mut weights = vec![Weight::Blocked; store.vertex_count() * d];
    for (i, v) in store.iter_vertices().enumerate() {
        for axis in 0..d {
            let e = Edge { lo: v.clone(), axis };
            if bounds.touches_edge(&e) {
                let mut rng = ChaCha8Rng::seed_from_u64(edge_stream_seed(seed, &e));
                weights[i * d + axis] = spec.draw(&mut rng, resolution);
            }
        }
    }
    Ok(Environment {
        base: Arc::new(EnvBase {
            spec: spec.clone(),
            bounds: bounds.clone(),
            seed,
            store,
            weights,
        }),
        overrides: HashMap::new(),
    })
}

/// `derived_stats` as a free function mirroring the module interface.
pub fn derived_stats(spec: &DistributionSpec) -> DerivedStats {
    spec.derived_stats()
}

pub fn is_useful(spec: &DistributionSpec) -> Result<bool> {
    spec.is_useful()
}

pub fn apply_overrides(env: &Environment, pairs: &[(Edge, Weight)]) -> Result<Environment> {
    env.with_overrides(pairs)
}
