//! Phase distributions, seeded i.i.d. phase realizations, the two-site
//! ergodic shift, and correlated Verblunski phases built from cumulative sums.
//!
//! Randomness is counter based: the phase at lattice index `k` of stream `s`
//! under seed `seed` is a pure function of `(seed, s, k)`. A ChaCha8 keystream
//! is keyed by `seed`, selected by `s`, and positioned at a fixed word offset
//! derived from `k`, so any sub-range can be regenerated independently and
//! parallel schedules cannot change the draws.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::{canonical, circular_distance};
use crate::error::{domain, Error, Result};

const WEIGHT_TOL: f64 = 1e-9;

/// A closed arc `[center - halfwidth, center + halfwidth]` on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub center: f64,
    pub halfwidth: f64,
}

impl Arc {
    pub fn new(center: f64, halfwidth: f64) -> Result<Self> {
        if !center.is_finite() || !halfwidth.is_finite() || halfwidth < 0.0 {
            return Err(domain(format!(
                "arc needs finite center and nonnegative halfwidth, got ({center}, {halfwidth})"
            )));
        }
        Ok(Arc {
            center: canonical(center),
            halfwidth: halfwidth.min(PI),
        })
    }

    pub fn full() -> Self {
        Arc {
            center: 0.0,
            halfwidth: PI,
        }
    }

    pub fn is_full(&self) -> bool {
        self.halfwidth >= PI
    }

    /// Distance from `theta` to the arc (zero inside).
    pub fn distance(&self, theta: f64) -> f64 {
        (circular_distance(theta, self.center) - self.halfwidth).max(0.0)
    }

    pub fn contains(&self, theta: f64, tol: f64) -> bool {
        self.distance(theta) <= tol
    }
}

/// A weighted point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: f64,
    pub weight: f64,
}

/// The single-site phase distribution ν on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhaseDistribution {
    UniformFullTorus,
    UniformArc(Arc),
    Atomic { atoms: Vec<Atom> },
    Mixture {
        ac_weight: f64,
        arc: Arc,
        atoms: Vec<Atom>,
    },
}

/// Topological support of a [`PhaseDistribution`]: closed arcs plus points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Support {
    pub arcs: Vec<Arc>,
    pub points: Vec<f64>,
}

impl Support {
    pub fn distance(&self, theta: f64) -> f64 {
        let a = self.arcs.iter().map(|a| a.distance(theta));
        let p = self.points.iter().map(|&p| circular_distance(theta, p));
        a.chain(p).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, theta: f64, tol: f64) -> bool {
        self.distance(theta) <= tol
    }

    /// `true` when the support contains an open interval.
    pub fn has_interior(&self) -> bool {
        self.arcs.iter().any(|a| a.halfwidth > 0.0)
    }
}

fn normalize_atoms(atoms: &[Atom]) -> Result<Vec<Atom>> {
    if atoms.is_empty() {
        return Err(domain("atomic part needs at least one point"));
    }
    let mut total = 0.0;
    for a in atoms {
        if !a.point.is_finite() || !a.weight.is_finite() || a.weight < 0.0 {
            return Err(domain(format!("bad atom {}@{}", a.point, a.weight)));
        }
        total += a.weight;
    }
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(domain(format!("atom weights sum to {total}, expected 1")));
    }
    Ok(atoms
        .iter()
        .map(|a| Atom {
            point: canonical(a.point),
            weight: a.weight / total,
        })
        .collect())
}

fn pick_atom(atoms: &[Atom], u: f64) -> f64 {
    let mut acc = 0.0;
    for a in atoms {
        acc += a.weight;
        if u < acc {
            return a.point;
        }
    }
    // u within rounding of 1: last atom with positive weight
    atoms
        .iter()
        .rev()
        .find(|a| a.weight > 0.0)
        .unwrap_or(&atoms[atoms.len() - 1])
        .point
}

impl PhaseDistribution {
    pub fn uniform() -> Self {
        PhaseDistribution::UniformFullTorus
    }

    pub fn arc(center: f64, halfwidth: f64) -> Result<Self> {
        Ok(PhaseDistribution::UniformArc(Arc::new(center, halfwidth)?))
    }

    pub fn atomic(atoms: &[(f64, f64)]) -> Result<Self> {
        let atoms: Vec<Atom> = atoms
            .iter()
            .map(|&(point, weight)| Atom { point, weight })
            .collect();
        Ok(PhaseDistribution::Atomic {
            atoms: normalize_atoms(&atoms)?,
        })
    }

    /// Point mass at `theta`.
    pub fn point(theta: f64) -> Self {
        PhaseDistribution::Atomic {
            atoms: vec![Atom {
                point: canonical(theta),
                weight: 1.0,
            }],
        }
    }

    pub fn mixture(ac_weight: f64, arc: Arc, atoms: &[(f64, f64)]) -> Result<Self> {
        if !(0.0..=1.0).contains(&ac_weight) {
            return Err(domain(format!("ac weight {ac_weight} outside [0, 1]")));
        }
        let atoms: Vec<Atom> = atoms
            .iter()
            .map(|&(point, weight)| Atom { point, weight })
            .collect();
        Ok(PhaseDistribution::Mixture {
            ac_weight,
            arc: Arc::new(arc.center, arc.halfwidth)?,
            atoms: normalize_atoms(&atoms)?,
        })
    }

    /// Re-checks invariants of a value that may have been deserialized.
    pub fn validate(&self) -> Result<()> {
        match self {
            PhaseDistribution::UniformFullTorus => Ok(()),
            PhaseDistribution::UniformArc(a) => Arc::new(a.center, a.halfwidth).map(|_| ()),
            PhaseDistribution::Atomic { atoms } => normalize_atoms(atoms).map(|_| ()),
            PhaseDistribution::Mixture {
                ac_weight,
                arc,
                atoms,
            } => {
                if !(0.0..=1.0).contains(ac_weight) {
                    return Err(domain("ac weight outside [0, 1]"));
                }
                Arc::new(arc.center, arc.halfwidth)?;
                normalize_atoms(atoms).map(|_| ())
            }
        }
    }

    /// Maps two independent uniforms on `[0, 1)` to a phase in `[0, 2π)`.
    ///
    /// `select` chooses the mixture component, `value` positions the draw
    /// inside it. Every kind consumes both, which keeps the per-index word
    /// budget fixed.
    pub fn phase_from_uniforms(&self, select: f64, value: f64) -> f64 {
        match self {
            PhaseDistribution::UniformFullTorus => canonical(TAU * value),
            PhaseDistribution::UniformArc(a) => {
                canonical(a.center + a.halfwidth * (2.0 * value - 1.0))
            }
            PhaseDistribution::Atomic { atoms } => pick_atom(atoms, select),
            PhaseDistribution::Mixture {
                ac_weight,
                arc,
                atoms,
            } => {
                if select < *ac_weight {
                    canonical(arc.center + arc.halfwidth * (2.0 * value - 1.0))
                } else {
                    pick_atom(atoms, value)
                }
            }
        }
    }

    pub fn support(&self) -> Support {
        let atoms_support = |atoms: &[Atom]| -> Vec<f64> {
            atoms
                .iter()
                .filter(|a| a.weight > 0.0)
                .map(|a| a.point)
                .collect()
        };
        match self {
            PhaseDistribution::UniformFullTorus => Support {
                arcs: vec![Arc::full()],
                points: vec![],
            },
            PhaseDistribution::UniformArc(a) => Support {
                arcs: vec![*a],
                points: vec![],
            },
            PhaseDistribution::Atomic { atoms } => Support {
                arcs: vec![],
                points: atoms_support(atoms),
            },
            PhaseDistribution::Mixture {
                ac_weight,
                arc,
                atoms,
            } => Support {
                arcs: if *ac_weight > 0.0 { vec![*arc] } else { vec![] },
                points: if *ac_weight < 1.0 {
                    atoms_support(atoms)
                } else {
                    vec![]
                },
            },
        }
    }

    /// `true` when ν has a nontrivial absolutely continuous part.
    pub fn has_ac_component(&self) -> bool {
        match self {
            PhaseDistribution::UniformFullTorus => true,
            PhaseDistribution::UniformArc(a) => a.halfwidth > 0.0,
            PhaseDistribution::Atomic { .. } => false,
            PhaseDistribution::Mixture { ac_weight, arc, .. } => {
                *ac_weight > 0.0 && arc.halfwidth > 0.0
            }
        }
    }
}

fn fmt_atoms(f: &mut fmt::Formatter<'_>, atoms: &[Atom]) -> fmt::Result {
    write!(f, "atoms:")?;
    for (i, a) in atoms.iter().enumerate() {
        if i > 0 {
            write!(f, ";")?;
        }
        write!(f, "{}@{}", a.point, a.weight)?;
    }
    Ok(())
}

/// Canonical spec string; round-trips through [`FromStr`].
impl fmt::Display for PhaseDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseDistribution::UniformFullTorus => write!(f, "uniform"),
            PhaseDistribution::UniformArc(a) => write!(f, "arc:{},{}", a.center, a.halfwidth),
            PhaseDistribution::Atomic { atoms } => fmt_atoms(f, atoms),
            PhaseDistribution::Mixture {
                ac_weight,
                arc,
                atoms,
            } => {
                write!(f, "mix:{},arc:{},{},", ac_weight, arc.center, arc.halfwidth)?;
                fmt_atoms(f, atoms)
            }
        }
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad {what} '{s}'")))
}

fn parse_arc(body: &str) -> Result<Arc> {
    let (c, h) = body
        .split_once(',')
        .ok_or_else(|| Error::Parse(format!("arc needs '<center>,<halfwidth>', got '{body}'")))?;
    Arc::new(parse_f64(c, "arc center")?, parse_f64(h, "arc halfwidth")?)
}

fn parse_atoms(body: &str) -> Result<Vec<(f64, f64)>> {
    body.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (p, w) = item
                .split_once('@')
                .ok_or_else(|| Error::Parse(format!("atom needs '<point>@<weight>', got '{item}'")))?;
            Ok((parse_f64(p, "atom point")?, parse_f64(w, "atom weight")?))
        })
        .collect()
}

/// Grammar: `uniform`, `arc:<center>,<halfwidth>`, `atoms:<p1>@<w1>;...`,
/// `mix:<acw>,arc:<center>,<halfwidth>,atoms:<p1>@<w1>;...`.
impl FromStr for PhaseDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(PhaseDistribution::UniformFullTorus);
        }
        if let Some(body) = s.strip_prefix("arc:") {
            return Ok(PhaseDistribution::UniformArc(parse_arc(body)?));
        }
        if let Some(body) = s.strip_prefix("atoms:") {
            return PhaseDistribution::atomic(&parse_atoms(body)?);
        }
        if let Some(body) = s.strip_prefix("mix:") {
            let (acw, rest) = body
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("mix needs '<acw>,arc:...,atoms:...', got '{s}'")))?;
            let rest = rest
                .trim()
                .strip_prefix("arc:")
                .ok_or_else(|| Error::Parse("mix: expected 'arc:' after weight".into()))?;
            let (arc, atoms) = rest
                .split_once(",atoms:")
                .ok_or_else(|| Error::Parse("mix: expected ',atoms:' after arc".into()))?;
            return PhaseDistribution::mixture(
                parse_f64(acw, "ac weight")?,
                parse_arc(arc)?,
                &parse_atoms(atoms)?,
            );
        }
        Err(Error::Parse(format!("unknown distribution spec '{s}'")))
    }
}

/// Draws `(select, value)` uniform pairs for consecutive lattice indices.
///
/// Each index owns four 32-bit words of the keystream of `(seed, stream)`.
pub struct PhaseStream<'a> {
    dist: &'a PhaseDistribution,
    rng: ChaCha8Rng,
}

const WORDS_PER_INDEX: u128 = 4;

fn index_key(index: i64) -> u128 {
    // order-preserving map of i64 onto u64
    ((index as u64) ^ (1u64 << 63)) as u128
}

#[inline]
fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl<'a> PhaseStream<'a> {
    /// Positions the stream so the next draw is the phase at `start`.
    pub fn new(dist: &'a PhaseDistribution, seed: u64, stream: u64, start: i64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng.set_word_pos(index_key(start) * WORDS_PER_INDEX);
        PhaseStream { dist, rng }
    }

    #[inline]
    pub fn next_phase(&mut self) -> f64 {
        let select = unit_f64(self.rng.next_u64());
        let value = unit_f64(self.rng.next_u64());
        self.dist.phase_from_uniforms(select, value)
    }
}

/// Inclusive integer index range `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub lo: i64,
    pub hi: i64,
}

impl IndexRange {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if hi < lo {
            return Err(domain(format!("empty index range {lo}..={hi}")));
        }
        Ok(IndexRange { lo, hi })
    }

    /// `len` consecutive indices starting at `lo`.
    pub fn with_len(lo: i64, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(domain("empty index range"));
        }
        Self::new(lo, lo + len as i64 - 1)
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, k: i64) -> bool {
        self.lo <= k && k <= self.hi
    }

    pub fn covers(&self, other: &IndexRange) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

/// A finite stretch of the phase sequence `θ_k`, `k` in a contiguous range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub seed: u64,
    pub stream: u64,
    pub offset: i64,
    pub phases: Vec<f64>,
}

impl DisorderRealization {
    /// Wraps explicit phases (canonicalized) starting at lattice index `offset`.
    pub fn from_phases(offset: i64, phases: Vec<f64>) -> Result<Self> {
        if phases.is_empty() {
            return Err(domain("realization needs at least one phase"));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(domain("non-finite phase"));
        }
        Ok(DisorderRealization {
            seed: 0,
            stream: 0,
            offset,
            phases: phases.into_iter().map(canonical).collect(),
        })
    }

    /// All phases equal to `theta` on `range`.
    pub fn constant(range: IndexRange, theta: f64) -> Self {
        DisorderRealization {
            seed: 0,
            stream: 0,
            offset: range.lo,
            phases: vec![canonical(theta); range.len()],
        }
    }

    pub fn range(&self) -> IndexRange {
        IndexRange {
            lo: self.offset,
            hi: self.offset + self.phases.len() as i64 - 1,
        }
    }

    pub fn get(&self, k: i64) -> Option<f64> {
        let i = k.checked_sub(self.offset)?;
        if i < 0 {
            return None;
        }
        self.phases.get(i as usize).copied()
    }

    pub fn phase(&self, k: i64) -> Result<f64> {
        self.get(k).ok_or_else(|| {
            let r = self.range();
            Error::OutOfRange {
                index: k,
                lo: r.lo,
                hi: r.hi,
            }
        })
    }

    /// Sub-realization restricted to `range`.
    pub fn restrict(&self, range: IndexRange) -> Result<Self> {
        let own = self.range();
        if !own.covers(&range) {
            let bad = if range.lo < own.lo { range.lo } else { range.hi };
            return Err(Error::OutOfRange {
                index: bad,
                lo: own.lo,
                hi: own.hi,
            });
        }
        let start = (range.lo - self.offset) as usize;
        Ok(DisorderRealization {
            seed: self.seed,
            stream: self.stream,
            offset: range.lo,
            phases: self.phases[start..start + range.len()].to_vec(),
        })
    }

    /// Adds `alpha` to every phase.
    pub fn rotated(&self, alpha: f64) -> Self {
        DisorderRealization {
            phases: self.phases.iter().map(|&p| canonical(p + alpha)).collect(),
            ..self.clone()
        }
    }

    /// Replaces the phase at `k`.
    pub fn with_phase(&self, k: i64, theta: f64) -> Result<Self> {
        let i = (k - self.offset) as usize;
        self.phase(k)?;
        let mut out = self.clone();
        out.phases[i] = canonical(theta);
        Ok(out)
    }
}

/// Samples `θ_k ~ ν` i.i.d. for `k` in `range` on stream 0.
pub fn sample_phases(
    dist: &PhaseDistribution,
    seed: u64,
    range: IndexRange,
) -> Result<DisorderRealization> {
    sample_phases_stream(dist, seed, 0, range)
}

/// Samples on an explicit stream; distinct streams are independent.
pub fn sample_phases_stream(
    dist: &PhaseDistribution,
    seed: u64,
    stream: u64,
    range: IndexRange,
) -> Result<DisorderRealization> {
    dist.validate()?;
    let mut s = PhaseStream::new(dist, seed, stream, range.lo);
    let phases = (0..range.len()).map(|_| s.next_phase()).collect();
    Ok(DisorderRealization {
        seed,
        stream,
        offset: range.lo,
        phases,
    })
}

/// The ergodic shift `W^j`: output phase at `k` equals input phase at `k + 2j`.
///
/// The returned realization covers every index whose source index is
/// available, i.e. the input range translated by `-2j`.
pub fn shift_realization(omega: &DisorderRealization, j: i64) -> Result<DisorderRealization> {
    let delta = j
        .checked_mul(2)
        .and_then(|d| omega.offset.checked_sub(d))
        .ok_or_else(|| domain(format!("shift {j} overflows the lattice index")))?;
    Ok(DisorderRealization {
        offset: delta,
        ..omega.clone()
    })
}

/// [`shift_realization`] restricted to `range`, which must be fully covered
/// by the shifted source.
pub fn shift_realization_on(
    omega: &DisorderRealization,
    j: i64,
    range: IndexRange,
) -> Result<DisorderRealization> {
    shift_realization(omega, j)?.restrict(range)
}

/// Verblunski phases `η_k` of coefficients `α_k = r e^{iη_k}`, `k ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerblunskiPhaseSequence {
    pub etas: Vec<f64>,
    pub r: f64,
}

fn check_modulus(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return Err(domain(format!("Verblunski modulus {r} outside (0, 1)")));
    }
    Ok(())
}

impl VerblunskiPhaseSequence {
    pub fn from_etas(etas: Vec<f64>, r: f64) -> Result<Self> {
        check_modulus(r)?;
        if etas.iter().any(|e| !e.is_finite()) {
            return Err(domain("non-finite Verblunski phase"));
        }
        Ok(VerblunskiPhaseSequence {
            etas: etas.into_iter().map(canonical).collect(),
            r,
        })
    }

    pub fn len(&self) -> usize {
        self.etas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.etas.is_empty()
    }

    pub fn coefficients(&self) -> Vec<Complex64> {
        self.etas
            .iter()
            .map(|&e| Complex64::from_polar(self.r, e))
            .collect()
    }

    /// First differences `θ_k = η_k - η_{k-1}` with `η_{-1} = 0`.
    pub fn thetas(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.etas
            .iter()
            .map(|&e| {
                let th = canonical(e - prev);
                prev = e;
                th
            })
            .collect()
    }

    /// The differenced phases as a realization starting at index 0.
    pub fn theta_realization(&self) -> Result<DisorderRealization> {
        DisorderRealization::from_phases(0, self.thetas())
    }
}

/// Cumulative phases `η_k = θ_0 + … + θ_k (mod 2π)` from a realization covering `0..N`.
pub fn correlated_verblunski(
    omega: &DisorderRealization,
    r: f64,
) -> Result<VerblunskiPhaseSequence> {
    check_modulus(r)?;
    if omega.offset > 0 {
        return Err(Error::OutOfRange {
            index: 0,
            lo: omega.range().lo,
            hi: omega.range().hi,
        });
    }
    let start = (-omega.offset) as usize;
    if start >= omega.phases.len() {
        return Err(Error::OutOfRange {
            index: 0,
            lo: omega.range().lo,
            hi: omega.range().hi,
        });
    }
    let mut acc = 0.0;
    let etas = omega.phases[start..]
        .iter()
        .map(|&th| {
            acc = canonical(acc + th);
            acc
        })
        .collect();
    Ok(VerblunskiPhaseSequence { etas, r })
}
