//! Critical precision schedules, maximum number of sharing rounds,
//! entanglement thresholds, the bidirectional (m, n) frontier and the
//! optimal-angle certificate.

use std::f64::consts::FRAC_PI_4;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{pauli_disturbance_product, resource_factor, tgb_critical_g_asymmetric};
use crate::error::{Error, Result};
use crate::measurements::{quality_factor, JointKind, Party, RoundSpec};
use crate::protocol::{round_transfer, BlochEngine, VIOLATION_MARGIN};
use crate::qmath::{entanglement_entropy, eof};
use crate::states::{BaseState, SourceSpec};

/// Rounds beyond this depth are never useful; the frontier search stops here.
pub const MAX_DEPTH: usize = 8;

/// Tolerance of the engine-backed critical-precision bisection.
pub const ROOT_TOLERANCE: f64 = 1e-12;

/// Tolerance of the entanglement-threshold bisection on the family parameter.
pub const THRESHOLD_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case")]
pub enum Scenario {
    /// One sharp Alice, a chain of Charus, Bell-state measurement.
    UniBrgp,
    /// Alice and Charu chains of equal length with identical precisions.
    BiEqualBrgp,
    /// One sharp Alice, a chain of Charus, elegant joint measurement with Pauli settings.
    UniEjm { theta: f64 },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::UniBrgp => "uni-brgp",
            Scenario::BiEqualBrgp => "bi-equal-brgp",
            Scenario::UniEjm { .. } => "uni-ejm",
        }
    }

    /// Base state the families use for this scenario.
    pub fn natural_base(&self) -> BaseState {
        match self {
            Scenario::UniEjm { .. } => BaseState::PsiMinus,
            _ => BaseState::PhiPlus,
        }
    }
}

/// The pair of sources feeding the network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub source1: SourceSpec,
    pub source2: SourceSpec,
}

impl Resource {
    pub fn symmetric(source: SourceSpec) -> Self {
        Self {
            source1: source,
            source2: source,
        }
    }

    pub fn maximally_entangled(base: BaseState) -> Self {
        Self::symmetric(SourceSpec::maximally_entangled(base))
    }

    pub fn validate(&self) -> Result<()> {
        self.source1.validate()?;
        self.source2.validate()
    }

    /// `sqrt(v1 v2)(1 + 2 (eta1(1-eta1) eta2(1-eta2))^{1/4})`.
    pub fn factor(&self) -> Result<f64> {
        resource_factor(
            self.source1.visibility,
            self.source2.visibility,
            self.source1.eta,
            self.source2.eta,
        )
    }

    fn is_singlet_werner(&self) -> bool {
        [self.source1, self.source2]
            .iter()
            .all(|s| s.base == BaseState::PsiMinus && s.eta == 0.5)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharingResult {
    pub scenario: Scenario,
    /// Critical precision of every round that can still violate.
    pub schedule: Vec<f64>,
    /// The first root above 1, when it is known.
    pub next_root: Option<f64>,
    pub max_rounds: usize,
    /// Achievable `(m, n)` chain lengths implied by the schedule.
    pub frontier: Vec<(usize, usize)>,
}

/// Critical precision of every round, each solving the boundary equation
/// with all earlier rounds at their own critical values.
pub fn critical_schedule(scenario: Scenario, resource: &Resource) -> Result<SharingResult> {
    resource.validate()?;
    let (schedule, next_root) = match scenario {
        Scenario::UniBrgp => brgp_chain(resource.factor()?.powi(2))?,
        Scenario::BiEqualBrgp => brgp_chain(std::f64::consts::SQRT_2 * resource.factor()?)?,
        Scenario::UniEjm { theta } => {
            if resource.is_singlet_werner() {
                ejm_closed_chain(resource, theta)?
            } else {
                ejm_engine_chain(resource, theta)?
            }
        }
    };
    if schedule.is_empty() {
        return Err(Error::NoViolation);
    }
    let max_rounds = schedule.len();
    let frontier = match scenario {
        Scenario::BiEqualBrgp => vec![(max_rounds, max_rounds)],
        _ => vec![(1, max_rounds)],
    };
    Ok(SharingResult {
        scenario,
        schedule,
        next_root,
        max_rounds,
        frontier,
    })
}

/// Chain `G_k = 2^k / (c P_k)`, i.e. `G_1 = 2/c`, `G_{k+1} = 2 G_k/(1 + F_k)`.
///
/// For one sharp Alice `B = R sqrt(2^{-n} P_n G_n)`, so `c = R^2`. With equal
/// chains `B = R sqrt(2) P_k G_k / 2^k`, so `c = sqrt(2) R`.
fn brgp_chain(c: f64) -> Result<(Vec<f64>, Option<f64>)> {
    if c <= 0.0 {
        return Ok((Vec::new(), None));
    }
    let mut schedule = Vec::new();
    let mut g = 2.0 / c;
    for _ in 0..64 {
        if g > 1.0 {
            return Ok((schedule, Some(g)));
        }
        schedule.push(g);
        g = 2.0 * g / (1.0 + quality_factor(g));
    }
    Err(Error::Config("critical schedule did not terminate".into()))
}

fn ejm_closed_chain(resource: &Resource, theta: f64) -> Result<(Vec<f64>, Option<f64>)> {
    let (v1, v2) = (resource.source1.visibility, resource.source2.visibility);
    let mut schedule: Vec<f64> = Vec::new();
    for _ in 0..64 {
        let mut chain = schedule.clone();
        chain.push(1.0);
        let g = tgb_critical_g_asymmetric(v1, v2, theta, pauli_disturbance_product(&chain));
        if g > 1.0 {
            return Ok((schedule, g.is_finite().then_some(g)));
        }
        schedule.push(g);
    }
    Err(Error::Config("critical schedule did not terminate".into()))
}

fn pauli_chain(prior: &[f64], last: f64) -> Result<Vec<RoundSpec>> {
    prior
        .iter()
        .chain(std::iter::once(&last))
        .map(|&g| RoundSpec::pauli(g))
        .collect()
}

/// Bisection on `BE - (3 + 5Z)` with the fast engine, when no closed form applies.
fn ejm_engine_chain(resource: &Resource, theta: f64) -> Result<(Vec<f64>, Option<f64>)> {
    let engine = BlochEngine::new(&resource.source1, &resource.source2, JointKind::Ejm { theta })?;
    let alice = [RoundSpec::pauli(1.0)?];
    let margin = |prior: &[f64], g: f64| -> Result<f64> {
        Ok(engine.report(&alice, &pauli_chain(prior, g)?)?.margin())
    };
    let mut schedule: Vec<f64> = Vec::new();
    while schedule.len() < MAX_DEPTH {
        if margin(&schedule, 1.0)? <= 0.0 {
            break;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > ROOT_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if margin(&schedule, mid)? > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        schedule.push(hi);
    }
    Ok((schedule, None))
}

/// Largest number of Charus (or of equal pairs) that can violate; 0 when none can.
pub fn max_rounds(resource: &Resource, scenario: Scenario) -> Result<usize> {
    match critical_schedule(scenario, resource) {
        Ok(result) => Ok(result.max_rounds),
        Err(Error::NoViolation) => Ok(0),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Pure states parameterized by `eta`, entanglement measured by the entropy of entanglement.
    Nme,
    /// Maximally entangled states mixed with white noise, entanglement measured by EoF.
    Werner,
}

impl Family {
    /// Parameter range, ordered from unentangled to maximally entangled.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Family::Nme => (0.0, 0.5),
            Family::Werner => (0.0, 1.0),
        }
    }

    pub fn parameter_name(&self) -> &'static str {
        match self {
            Family::Nme => "eta",
            Family::Werner => "v",
        }
    }

    pub fn source(&self, parameter: f64, base: BaseState) -> Result<SourceSpec> {
        match self {
            Family::Nme => SourceSpec::new(parameter, 1.0, base),
            Family::Werner => SourceSpec::werner(parameter, base),
        }
    }

    pub fn entanglement(&self, parameter: f64, base: BaseState) -> Result<f64> {
        let source = self.source(parameter, base)?;
        match self {
            Family::Nme => entanglement_entropy(&source.pure_part()?),
            Family::Werner => eof(&source.state()?),
        }
    }

    /// Family parameter with the given entanglement, by bisection on the monotone map.
    pub fn parameter_for(&self, entanglement: f64, base: BaseState) -> Result<f64> {
        if !(0.0..=1.0).contains(&entanglement) {
            return Err(Error::Param {
                name: "entanglement",
                value: entanglement,
            });
        }
        let (mut lo, mut hi) = self.range();
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if self.entanglement(mid, base)? >= entanglement {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub target_rounds: usize,
    pub family: Family,
    pub scenario: Scenario,
    /// Family parameter at the step edge.
    pub parameter: f64,
    pub entanglement: f64,
}

fn family_rounds(family: Family, scenario: Scenario, parameter: f64) -> Result<usize> {
    let source = family.source(parameter, scenario.natural_base())?;
    max_rounds(&Resource::symmetric(source), scenario)
}

/// Smallest entanglement at which `target_rounds` rounds become possible.
pub fn entanglement_threshold(target_rounds: usize, family: Family, scenario: Scenario) -> Result<Threshold> {
    if target_rounds == 0 {
        return Err(Error::Config("target rounds must be at least 1".into()));
    }
    let (mut lo, mut hi) = family.range();
    if family_rounds(family, scenario, hi)? < target_rounds {
        return Err(Error::Unreachable(target_rounds));
    }
    if family_rounds(family, scenario, lo)? >= target_rounds {
        hi = lo;
    }
    while hi - lo > THRESHOLD_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if family_rounds(family, scenario, mid)? >= target_rounds {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Threshold {
        target_rounds,
        family,
        scenario,
        parameter: hi,
        entanglement: family.entanglement(hi, scenario.natural_base())?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub parameter: f64,
    pub entanglement: f64,
    pub uni_brgp: usize,
    pub bi_equal_brgp: usize,
    pub uni_ejm: usize,
}

/// Maximum rounds of every scenario over a parameter grid of one family.
pub fn sweep_max_rounds(family: Family, grid: &[f64], ejm_theta: f64) -> Result<Vec<SweepPoint>> {
    grid.par_iter()
        .map(|&p| {
            Ok(SweepPoint {
                parameter: p,
                entanglement: family.entanglement(p, BaseState::PhiPlus)?,
                uni_brgp: family_rounds(family, Scenario::UniBrgp, p)?,
                bi_equal_brgp: family_rounds(family, Scenario::BiEqualBrgp, p)?,
                uni_ejm: family_rounds(family, Scenario::UniEjm { theta: ejm_theta }, p)?,
            })
        })
        .collect()
}

/// `steps` evenly spaced points from `start` to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, steps: usize) -> Result<Vec<f64>> {
    match steps {
        0 => Err(Error::Config("a grid needs at least one step".into())),
        1 => Ok(vec![start]),
        _ => Ok((0..steps)
            .map(|k| start + (stop - start) * k as f64 / (steps - 1) as f64)
            .collect()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub allow_unequal_precision: bool,
    /// Pareto-maximal `(m, n)`.
    pub pareto: Vec<(usize, usize)>,
    /// For each `m` from 1, the largest feasible `n` (0 when none).
    pub max_partner_rounds: Vec<(usize, usize)>,
    /// Whether the grid scan found exactly the same feasible set.
    pub grid_agrees: bool,
}

/// Largest first-round precision from which a greedy chain still has round
/// `k` at `G <= 1`: anchor `G_k = 1` and run `G_{i+1} = 2G_i/(1+F_i)` backwards,
/// whose inverse is `G_i = 4 G_{i+1} / (4 + G_{i+1}^2)`.
pub fn anchored_level(k: usize) -> f64 {
    let mut g = 1.0;
    for _ in 1..k {
        g = 4.0 * g / (4.0 + g * g);
    }
    g
}

/// Rounds a greedy chain starting at `level` sustains with `G <= 1`.
fn chain_length(level: f64) -> usize {
    let mut g = level;
    let mut k = 0;
    while g <= 1.0 && k < MAX_DEPTH {
        k += 1;
        g = 2.0 * g / (1.0 + quality_factor(g));
    }
    k
}

/// `B(A^i, C^j) = R sqrt(a c / 2)` for greedy chains at levels `a`, `c`.
fn pair_violates(factor: f64, a: f64, c: f64) -> bool {
    factor * (a * c / 2.0).sqrt() > 1.0 + VIOLATION_MARGIN
}

fn pareto(points: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = points
        .iter()
        .copied()
        .filter(|&(m, n)| !points.iter().any(|&(p, q)| (p, q) != (m, n) && p >= m && q >= n))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Whether `m` Alices and `n` Charus can all pairwise violate the BRGP inequality.
pub fn bidirectional_feasible(resource: &Resource, m: usize, n: usize, allow_unequal: bool) -> Result<bool> {
    let factor = resource.factor()?;
    if m == 0 || n == 0 || m > MAX_DEPTH || n > MAX_DEPTH {
        return Ok(false);
    }
    if !allow_unequal && m != n {
        return Ok(false);
    }
    Ok(pair_violates(factor, anchored_level(m), anchored_level(n)))
}

/// Precision chains realizing `(m, n)` with slack split evenly between the two sides.
pub fn bidirectional_schedule(resource: &Resource, m: usize, n: usize) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    if !bidirectional_feasible(resource, m, n, true)? {
        return Ok(None);
    }
    let factor = resource.factor()?;
    let (am, an) = (anchored_level(m), anchored_level(n));
    let needed = 2.0 / (factor * factor);
    let shrink = ((1.0 + needed / (am * an)) / 2.0).sqrt();
    let chain = |level: f64, len: usize| {
        let mut out = Vec::with_capacity(len);
        let mut g = level;
        for _ in 0..len {
            out.push(g);
            g = 2.0 * g / (1.0 + quality_factor(g));
        }
        out
    };
    Ok(Some((chain(am * shrink, m), chain(an * shrink, n))))
}

/// Pareto-maximal `(m, n)`, plus a grid scan over chain levels (step 1e-3)
/// confirming that no schedule on the grid does better.
pub fn bidirectional_frontier(resource: &Resource, allow_unequal: bool) -> Result<Frontier> {
    let factor = resource.factor()?;
    let mut feasible = Vec::new();
    for m in 1..=MAX_DEPTH {
        for n in 1..=MAX_DEPTH {
            if bidirectional_feasible(resource, m, n, allow_unequal)? {
                feasible.push((m, n));
            }
        }
    }

    let levels: Vec<(f64, usize)> = (1..=1000)
        .map(|k| {
            let level = k as f64 / 1000.0;
            (level, chain_length(level))
        })
        .collect();
    let mut best_level = [0.0f64; MAX_DEPTH + 1];
    for &(level, len) in &levels {
        for slot in best_level.iter_mut().take(len + 1).skip(1) {
            *slot = slot.max(level);
        }
    }
    let mut grid_feasible = Vec::new();
    for m in 1..=MAX_DEPTH {
        for n in 1..=MAX_DEPTH {
            let ok = if allow_unequal {
                best_level[m] > 0.0 && best_level[n] > 0.0 && pair_violates(factor, best_level[m], best_level[n])
            } else {
                m == n && best_level[m] > 0.0 && pair_violates(factor, best_level[m], best_level[m])
            };
            if ok {
                grid_feasible.push((m, n));
            }
        }
    }
    // a grid point is a valid schedule, so the grid can only lose pairs, never add them
    let grid_agrees = grid_feasible == feasible;

    let max_partner_rounds = (1..=MAX_DEPTH)
        .map(|m| {
            let best = feasible.iter().filter(|p| p.0 == m).map(|p| p.1).max().unwrap_or(0);
            (m, best)
        })
        .collect();
    Ok(Frontier {
        allow_unequal_precision: allow_unequal,
        pareto: pareto(&feasible),
        max_partner_rounds,
        grid_agrees,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundOptimum {
    pub round: usize,
    pub theta: f64,
    /// Alice's angle, optimized jointly with the first Charu only.
    pub phi: f64,
    pub b_max: f64,
    pub b_at_pi_4: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleCertificate {
    /// Charu precisions the search holds fixed.
    pub charu_g: Vec<f64>,
    pub rounds: Vec<RoundOptimum>,
    /// Largest `B` on the joint angle grid of the last round.
    pub joint_grid_max: f64,
    pub b_at_pi_4: f64,
    /// Every round's argmax within 1e-3 rad of `pi/4` and the joint grid never above `B(pi/4)`.
    pub pi_4_optimal: bool,
}

const ANGLE_STEP: f64 = 0.01;
const ANGLE_TOLERANCE: f64 = 1e-3;
const INTERMEDIATE_G: f64 = 0.6;

type Mat3 = [[f64; 3]; 3];

/// BRGP value for one sharp Alice and in-plane Charus, from signed correlation tensors.
struct AngleModel {
    signed: [Mat3; 2],
    charu_g: Vec<f64>,
}

impl AngleModel {
    fn new(resource: &Resource, charu_g: Vec<f64>) -> Result<Self> {
        let engine = BlochEngine::new(&resource.source1, &resource.source2, JointKind::Bsm)?;
        Ok(Self {
            signed: [engine.signed_correlations(0), engine.signed_correlations(1)],
            charu_g,
        })
    }

    fn alice(phi: f64, x: usize) -> [f64; 3] {
        let s = if x == 0 { 1.0 } else { -1.0 };
        [-s * phi.sin(), 0.0, phi.cos()]
    }

    fn charu(theta: f64, z: usize) -> [f64; 3] {
        let s = if z == 0 { 1.0 } else { -1.0 };
        [s * theta.sin(), 0.0, theta.cos()]
    }

    /// Correlation block after the earlier Charu rounds at `angles`.
    fn evolved(&self, tensor: &Mat3, angles: &[f64]) -> Result<Mat3> {
        let mut t = *tensor;
        for (&theta, &g) in angles.iter().zip(&self.charu_g) {
            let m = round_transfer(&RoundSpec::in_plane(theta, g)?, Party::Charu)?;
            let mut next = [[0.0; 3]; 3];
            for i in 0..3 {
                for k in 0..3 {
                    next[i][k] = (0..3).map(|j| t[i][j] * m[k + 1][j + 1]).sum();
                }
            }
            t = next;
        }
        Ok(t)
    }

    /// Plain and parity-signed sums over the two settings of a party's vectors.
    fn setting_sums(v: impl Fn(usize) -> [f64; 3]) -> [[f64; 3]; 2] {
        let (v0, v1) = (v(0), v(1));
        [[0, 1, 2].map(|k| v0[k] + v1[k]), [0, 1, 2].map(|k| v0[k] - v1[k])]
    }

    fn bilinear(u: &[f64; 3], t: &Mat3, w: &[f64; 3]) -> f64 {
        (0..3).map(|p| u[p] * (0..3).map(|q| t[p][q] * w[q]).sum::<f64>()).sum()
    }

    // I sums over all (x, z); J weights by (-1)^(x+z), which factorizes.
    fn value_from_sums(evolved: &[Mat3; 2], g_last: f64, alice: &[[f64; 3]; 2], charu: &[[f64; 3]; 2]) -> f64 {
        let scale = g_last / 4.0;
        let i = Self::bilinear(&alice[0], &evolved[0], &charu[0]);
        let j = Self::bilinear(&alice[1], &evolved[1], &charu[1]);
        (scale * i).abs().sqrt() + (scale * j).abs().sqrt()
    }

    fn value_with(evolved: &[Mat3; 2], g_last: f64, phi: f64, theta: f64) -> f64 {
        let alice = Self::setting_sums(|x| Self::alice(phi, x));
        let charu = Self::setting_sums(|z| Self::charu(theta, z));
        Self::value_from_sums(evolved, g_last, &alice, &charu)
    }

    /// `B` for the pair (Alice, Charu number `angles.len()`).
    fn value(&self, phi: f64, angles: &[f64]) -> Result<f64> {
        let (last, prior) = angles.split_last().expect("at least one angle");
        let evolved = [self.evolved(&self.signed[0], prior)?, self.evolved(&self.signed[1], prior)?];
        Ok(Self::value_with(&evolved, self.charu_g[angles.len() - 1], phi, *last))
    }
}

fn angle_grid() -> Vec<f64> {
    let steps = (std::f64::consts::FRAC_PI_2 / ANGLE_STEP).floor() as usize;
    (0..=steps).map(|k| k as f64 * ANGLE_STEP).collect()
}

/// Compass search from `start`, halving the step down to 1e-10.
fn refine(start: Vec<f64>, f: impl Fn(&[f64]) -> Result<f64>) -> Result<(Vec<f64>, f64)> {
    let mut x = start;
    let mut best = f(&x)?;
    let mut step = ANGLE_STEP;
    while step > 1e-10 {
        let mut improved = false;
        for k in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[k] += dir * step;
                let v = f(&y)?;
                if v > best {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    Ok((x, best))
}

/// Grid search (0.01 rad) plus local refinement of Alice's and the Charus'
/// angles at fixed precisions, for one sharp Alice and `round_count` Charus.
///
/// Round 1 optimizes `(theta_1, phi)` jointly; round `k > 1` optimizes
/// `theta_k` with earlier angles at their optimum. For the last round a joint
/// grid over all angles checks that nothing beats `pi/4` everywhere.
pub fn optimal_angle_search(resource: &Resource, round_count: usize) -> Result<AngleCertificate> {
    if round_count == 0 || round_count > 3 {
        return Err(Error::Config(format!("angle search supports 1 to 3 rounds, got {round_count}")));
    }
    let mut charu_g = vec![INTERMEDIATE_G; round_count - 1];
    charu_g.push(1.0);
    let model = AngleModel::new(resource, charu_g.clone())?;
    let grid = angle_grid();

    let mut rounds = Vec::with_capacity(round_count);
    let mut angles: Vec<f64> = Vec::new();
    let mut phi = FRAC_PI_4;
    for round in 1..=round_count {
        // each round is its own final measurement here: use precision 1 for the pair test
        let sub = AngleModel {
            signed: model.signed,
            charu_g: {
                let mut g = charu_g[..round - 1].to_vec();
                g.push(1.0);
                g
            },
        };
        let (theta, new_phi, b_max) = if round == 1 {
            let cells: Vec<(f64, f64, f64)> = grid
                .par_iter()
                .flat_map_iter(|&t| grid.iter().map(move |&p| (t, p)))
                .map(|(t, p)| Ok((t, p, sub.value(p, &[t])?)))
                .collect::<Result<_>>()?;
            let start = best_cell(&cells);
            let (x, b) = refine(vec![start.0, start.1], |v| sub.value(v[1], &[v[0]]))?;
            (x[0], x[1], b)
        } else {
            let eval = |t: f64| {
                let mut all = angles.clone();
                all.push(t);
                sub.value(phi, &all)
            };
            let cells: Vec<(f64, f64, f64)> =
                grid.iter().map(|&t| Ok((t, phi, eval(t)?))).collect::<Result<_>>()?;
            let start = best_cell(&cells);
            let (x, b) = refine(vec![start.0], |v| eval(v[0]))?;
            (x[0], phi, b)
        };
        phi = new_phi;
        angles.push(theta);
        rounds.push(RoundOptimum {
            round,
            theta,
            phi,
            b_max,
            b_at_pi_4: sub.value(FRAC_PI_4, &vec![FRAC_PI_4; round])?,
        });
    }

    let b_at_pi_4 = model.value(FRAC_PI_4, &vec![FRAC_PI_4; round_count])?;
    let joint_grid_max = joint_grid_max(&model, &grid, round_count)?;
    let pi_4_optimal = rounds.iter().all(|r| {
        (r.theta - FRAC_PI_4).abs() < ANGLE_TOLERANCE && (r.phi - FRAC_PI_4).abs() < ANGLE_TOLERANCE
    }) && joint_grid_max <= b_at_pi_4 + 1e-12;
    Ok(AngleCertificate {
        charu_g,
        rounds,
        joint_grid_max,
        b_at_pi_4,
        pi_4_optimal,
    })
}

fn best_cell(cells: &[(f64, f64, f64)]) -> (f64, f64, f64) {
    // first maximum in grid order keeps the result independent of scheduling
    cells.iter().copied().fold((0.0, 0.0, f64::NEG_INFINITY), |acc, c| if c.2 > acc.2 { c } else { acc })
}

fn joint_grid_max(model: &AngleModel, grid: &[f64], round_count: usize) -> Result<f64> {
    let prior_count = round_count - 1;
    let coarse: Vec<f64> = if prior_count > 1 {
        grid.iter().step_by(5).copied().collect()
    } else {
        grid.to_vec()
    };
    let mut priors: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..prior_count {
        priors = priors
            .into_iter()
            .flat_map(|p| coarse.iter().map(move |&t| {
                let mut q = p.clone();
                q.push(t);
                q
            }))
            .collect();
    }
    let g_last = model.charu_g[round_count - 1];
    let alice_sums: Vec<_> = grid.iter().map(|&p| AngleModel::setting_sums(|x| AngleModel::alice(p, x))).collect();
    let charu_sums: Vec<_> = grid.iter().map(|&t| AngleModel::setting_sums(|z| AngleModel::charu(t, z))).collect();
    let maxima: Vec<f64> = priors
        .par_iter()
        .map(|prior| {
            let evolved = [model.evolved(&model.signed[0], prior)?, model.evolved(&model.signed[1], prior)?];
            let mut best = f64::NEG_INFINITY;
            for alice in &alice_sums {
                for charu in &charu_sums {
                    best = best.max(AngleModel::value_from_sums(&evolved, g_last, alice, charu));
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    Ok(maxima.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn me() -> Resource {
        Resource::maximally_entangled(BaseState::PhiPlus)
    }

    #[test]
    fn uni_brgp_schedule() {
        let r = critical_schedule(Scenario::UniBrgp, &me()).unwrap();
        let expected = [0.5, 0.536, 0.581, 0.64, 0.725, 0.859];
        assert_eq!(r.max_rounds, 6);
        for (g, p) in r.schedule.iter().zip(expected) {
            assert!((g - p).abs() < 1e-3, "{g} vs {p}");
        }
        assert!((r.next_root.unwrap() - 1.135).abs() < 1e-3);
        for w in r.schedule.windows(2) {
            assert_relative_eq!(w[1], 2.0 * w[0] / (1.0 + (1.0 - w[0] * w[0]).sqrt()), epsilon = 1e-12);
        }
    }

    #[test]
    fn bi_equal_schedule() {
        let r = critical_schedule(Scenario::BiEqualBrgp, &me()).unwrap();
        assert_eq!(r.max_rounds, 2);
        assert_relative_eq!(r.schedule[0], FRAC_1_SQRT_2, epsilon = 1e-12);
        assert!((r.schedule[1] - 0.828).abs() < 1e-3);
        assert!((r.next_root.unwrap() - 1.06).abs() < 5e-3);
        assert_eq!(r.frontier, vec![(2, 2)]);
    }

    #[test]
    fn ejm_schedule() {
        let r = critical_schedule(Scenario::UniEjm { theta: 0.0 }, &Resource::maximally_entangled(BaseState::PsiMinus))
            .unwrap();
        assert_eq!(r.max_rounds, 2);
        assert_relative_eq!(r.schedule[0], 5.0 / 7.0, epsilon = 1e-12);
        assert!((r.schedule[1] - 0.893).abs() < 1e-3);
        assert!(r.next_root.unwrap() > 1.0);
    }

    #[test]
    fn weak_resources_do_not_violate() {
        let product = Resource::symmetric(SourceSpec::new(1.0, 1.0, BaseState::PhiPlus).unwrap());
        assert!(matches!(critical_schedule(Scenario::UniBrgp, &product), Err(Error::NoViolation)));
        assert_eq!(max_rounds(&product, Scenario::UniBrgp).unwrap(), 0);
    }

    #[test]
    fn anchored_levels_invert_the_recursion() {
        for k in 1..=6 {
            let level = anchored_level(k);
            let mut g = level;
            for _ in 1..k {
                g = 2.0 * g / (1.0 + quality_factor(g));
            }
            assert_relative_eq!(g, 1.0, epsilon = 1e-12);
        }
        assert_relative_eq!(anchored_level(2), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn frontier_examples() {
        let unequal = bidirectional_frontier(&me(), true).unwrap();
        assert_eq!(unequal.pareto, vec![(1, 6), (2, 3), (3, 2), (6, 1)]);
        assert!(unequal.grid_agrees);
        let equal = bidirectional_frontier(&me(), false).unwrap();
        assert_eq!(equal.pareto, vec![(2, 2)]);
        assert!(bidirectional_feasible(&me(), 4, 1, true).unwrap());
        assert!(!bidirectional_feasible(&me(), 2, 4, true).unwrap());
        let product = Resource::symmetric(SourceSpec::new(1.0, 1.0, BaseState::PhiPlus).unwrap());
        assert!(bidirectional_frontier(&product, true).unwrap().pareto.is_empty());
    }

    #[test]
    fn linear_grid_is_inclusive() {
        let g = linear_grid(0.3, 1.0, 141).unwrap();
        assert_eq!(g.len(), 141);
        assert_eq!(g[0], 0.3);
        assert_eq!(g[140], 1.0);
        assert!(linear_grid(0.0, 1.0, 0).is_err());
    }
}
