//! Brute-force simulation of the sequential swapping scenario.
//!
//! Qubits of the network state are ordered (A, B1, B2, C). Bob projects
//! (B1, B2) onto his joint basis, the Alice chain then acts on qubit 0 and the
//! Charu chain on qubit 1 of the remaining A-C state. Earlier observers'
//! settings are averaged with a uniform prior and their outcomes are never
//! communicated, so each earlier round contributes its outcome-averaged map.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::{
    label_permutations, weak_map_conditional, weak_map_unconditional, BobLabel, JointBasis, JointKind, Party,
    RoundSpec,
};
use crate::qmath::{kron, partial_trace, pauli_x, pauli_y, pauli_z, ComplexMatrix, DensityMatrix};
use crate::states::{network_state, SourceSpec};

/// Strict-violation margin, so boundary points do not flap.
pub const VIOLATION_MARGIN: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub source1: SourceSpec,
    pub source2: SourceSpec,
    pub joint: JointKind,
    pub alice_rounds: Vec<RoundSpec>,
    pub charu_rounds: Vec<RoundSpec>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.source1.validate()?;
        self.source2.validate()?;
        if self.alice_rounds.is_empty() || self.charu_rounds.is_empty() {
            return Err(Error::Config("each chain needs at least one round".into()));
        }
        let settings = self.setting_count();
        for round in self.alice_rounds.iter().chain(&self.charu_rounds) {
            round.validate()?;
            if round.setting_count() != settings {
                return Err(Error::Config(format!(
                    "{} scenario needs {settings} settings per round, a round has {}",
                    self.joint.name(),
                    round.setting_count()
                )));
            }
        }
        Ok(())
    }

    pub fn setting_count(&self) -> usize {
        self.joint.setting_count()
    }

    pub fn m(&self) -> usize {
        self.alice_rounds.len()
    }

    pub fn n(&self) -> usize {
        self.charu_rounds.len()
    }

    /// The configuration with the two sources and the two chains exchanged.
    pub fn mirrored(&self) -> ScenarioConfig {
        ScenarioConfig {
            source1: self.source2,
            source2: self.source1,
            joint: self.joint,
            alice_rounds: self.charu_rounds.clone(),
            charu_rounds: self.alice_rounds.clone(),
        }
    }
}

/// Unnormalized A-C state after Bob's outcome, with its probability.
#[derive(Clone, Debug)]
pub struct Branch {
    pub state: ComplexMatrix,
    pub probability: f64,
}

/// Projects Bob's two qubits of `rho4` onto basis element `outcome` and
/// traces them out.
pub fn condition_on_bob(rho4: &DensityMatrix, basis: &JointBasis, outcome: usize) -> Result<Branch> {
    if rho4.dim() != 16 {
        return Err(Error::Dimension(format!(
            "network state must be 16x16, got {0}x{0}",
            rho4.dim()
        )));
    }
    if outcome >= basis.elements.len() {
        return Err(Error::Config(format!("Bob outcome {outcome} out of range")));
    }
    let id = ComplexMatrix::identity(2);
    let proj = kron(&kron(&id, &basis.projector(outcome)), &id);
    let projected = proj.matmul(rho4.matrix()).matmul(&proj.dagger());
    let state = partial_trace(&projected, &[0, 3], &[2, 2, 2, 2])?;
    let probability = state.trace().re;
    Ok(Branch { state, probability })
}

/// Settings history index helpers: `index` enumerates `settings^len` strings.
fn digits(mut index: usize, len: usize, base: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = index % base;
        index /= base;
    }
    out
}

/// Precomputed Bob branches for one configuration.
pub struct Engine {
    config: ScenarioConfig,
    basis: JointBasis,
    branches: Vec<Branch>,
}

impl Engine {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        let basis = JointBasis::new(config.joint)?;
        Self::with_basis(config, basis)
    }

    /// Uses an explicit basis, e.g. a relabeled one.
    pub fn with_basis(config: &ScenarioConfig, basis: JointBasis) -> Result<Self> {
        config.validate()?;
        let rho4 = network_state(&config.source1, &config.source2)?;
        let branches = (0..basis.elements.len())
            .map(|b| condition_on_bob(&rho4, &basis, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            basis,
            branches,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn basis(&self) -> &JointBasis {
        &self.basis
    }

    pub fn branch(&self, outcome: usize) -> &Branch {
        &self.branches[outcome]
    }

    fn check_history(&self, history: &[usize], expected: usize, who: &str) -> Result<()> {
        let settings = self.config.setting_count();
        if history.len() != expected {
            return Err(Error::Config(format!(
                "{who} history has length {}, expected {expected}",
                history.len()
            )));
        }
        if let Some(bad) = history.iter().find(|&&s| s >= settings) {
            return Err(Error::Config(format!("{who} setting {bad} outside 0..{settings}")));
        }
        Ok(())
    }

    /// State reaching the last Alice and last Charu, given the earlier settings.
    pub fn run_chain(&self, outcome: usize, alice_history: &[usize], charu_history: &[usize]) -> Result<ComplexMatrix> {
        let m = self.config.m();
        let n = self.config.n();
        self.check_history(alice_history, m - 1, "alice")?;
        self.check_history(charu_history, n - 1, "charu")?;
        if outcome >= self.branches.len() {
            return Err(Error::Config(format!("Bob outcome {outcome} out of range")));
        }
        let mut state = self.branches[outcome].state.clone();
        for (round, &x) in self.config.alice_rounds.iter().zip(alice_history) {
            let dir = round.direction(x, Party::Alice)?;
            state = weak_map_unconditional(&state, Party::Alice.qubit(), &dir, round.quality())?;
        }
        for (round, &z) in self.config.charu_rounds.iter().zip(charu_history) {
            let dir = round.direction(z, Party::Charu)?;
            state = weak_map_unconditional(&state, Party::Charu.qubit(), &dir, round.quality())?;
        }
        Ok(state)
    }

    /// `P(a_m, b, c_n | x_1..x_m, z_1..z_n)` for complete setting strings.
    pub fn joint_probability(
        &self,
        outcome: usize,
        alice_settings: &[usize],
        charu_settings: &[usize],
        a: usize,
        c: usize,
    ) -> Result<f64> {
        let (x_last, alice_prior) = alice_settings
            .split_last()
            .ok_or_else(|| Error::Config("alice settings are empty".into()))?;
        let (z_last, charu_prior) = charu_settings
            .split_last()
            .ok_or_else(|| Error::Config("charu settings are empty".into()))?;
        self.check_history(&[*x_last], 1, "alice")?;
        self.check_history(&[*z_last], 1, "charu")?;
        let state = self.run_chain(outcome, alice_prior, charu_prior)?;
        self.final_probability(&state, *x_last, *z_last, a, c)
    }

    fn final_probability(&self, state: &ComplexMatrix, x: usize, z: usize, a: usize, c: usize) -> Result<f64> {
        let last_alice = self.config.alice_rounds.last().expect("validated");
        let last_charu = self.config.charu_rounds.last().expect("validated");
        let dir_a = last_alice.direction(x, Party::Alice)?;
        let dir_c = last_charu.direction(z, Party::Charu)?;
        let after_a = weak_map_conditional(state, Party::Alice.qubit(), &dir_a, last_alice.sharpness, a)?;
        let after_c = weak_map_conditional(&after_a, Party::Charu.qubit(), &dir_c, last_charu.sharpness, c)?;
        Ok(after_c.trace().re)
    }

    /// History-averaged table `P14(a_m, b, c_n | x_m, z_n)`.
    pub fn averaged_table(&self) -> Result<ProbabilityTable> {
        let s = self.config.setting_count();
        let m = self.config.m();
        let n = self.config.n();
        let alice_histories = s.pow((m - 1) as u32);
        let charu_histories = s.pow((n - 1) as u32);
        let weight = 1.0 / (alice_histories * charu_histories) as f64;
        let outcomes = self.branches.len();

        let jobs: Vec<(usize, usize, usize)> = (0..outcomes)
            .flat_map(|b| {
                (0..alice_histories).flat_map(move |ha| (0..charu_histories).map(move |hc| (b, ha, hc)))
            })
            .collect();

        // collect in order, then reduce sequentially: the sum is independent of scheduling
        let partials: Vec<Vec<(usize, f64)>> = jobs
            .par_iter()
            .map(|&(b, ha, hc)| -> Result<Vec<(usize, f64)>> {
                let state = self.run_chain(b, &digits(ha, m - 1, s), &digits(hc, n - 1, s))?;
                let mut out = Vec::with_capacity(s * s * 4);
                for x in 0..s {
                    for z in 0..s {
                        for a in 0..2 {
                            for c in 0..2 {
                                let p = self.final_probability(&state, x, z, a, c)?;
                                out.push((ProbabilityTable::offset(s, outcomes, x, z, a, b, c), p));
                            }
                        }
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;

        let mut table = ProbabilityTable::zeros(self.config.joint, self.basis.labels.clone());
        for partial in partials {
            for (idx, p) in partial {
                table.probs[idx] += weight * p;
            }
        }
        Ok(table)
    }
}

pub fn averaged_table(config: &ScenarioConfig) -> Result<ProbabilityTable> {
    Engine::new(config)?.averaged_table()
}

/// Distribution over `(a, b, c)` for every pair of final settings `(x, z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTable {
    pub joint: JointKind,
    pub settings: usize,
    pub labels: Vec<BobLabel>,
    probs: Vec<f64>,
}

/// One CSV row of a table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub x: usize,
    pub z: usize,
    pub a: usize,
    pub bob_label: String,
    pub c: usize,
    pub p: f64,
}

impl ProbabilityTable {
    fn zeros(joint: JointKind, labels: Vec<BobLabel>) -> Self {
        let settings = joint.setting_count();
        let len = settings * settings * 2 * labels.len() * 2;
        Self {
            joint,
            settings,
            labels,
            probs: vec![0.0; len],
        }
    }

    fn offset(settings: usize, outcomes: usize, x: usize, z: usize, a: usize, b: usize, c: usize) -> usize {
        ((((x * settings + z) * 2 + a) * outcomes + b) * 2) + c
    }

    pub fn get(&self, x: usize, z: usize, a: usize, b: usize, c: usize) -> f64 {
        self.probs[Self::offset(self.settings, self.labels.len(), x, z, a, b, c)]
    }

    pub fn outcomes(&self) -> usize {
        self.labels.len()
    }

    /// Largest deviation of any `(x, z)` block from unit total probability.
    pub fn normalization_error(&self) -> f64 {
        let block = 2 * self.outcomes() * 2;
        self.probs
            .chunks(block)
            .map(|chunk| (chunk.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Restriction to one Bob outcome, renormalized per setting pair.
    pub fn conditioned_on(&self, outcome: usize) -> ProbabilityTable {
        let mut out = self.clone();
        let s = self.settings;
        let outcomes = self.outcomes();
        for x in 0..s {
            for z in 0..s {
                let mass: f64 = (0..2)
                    .flat_map(|a| (0..2).map(move |c| (a, c)))
                    .map(|(a, c)| self.get(x, z, a, outcome, c))
                    .sum();
                for a in 0..2 {
                    for b in 0..outcomes {
                        for c in 0..2 {
                            let idx = Self::offset(s, outcomes, x, z, a, b, c);
                            out.probs[idx] = if b == outcome && mass > 0.0 {
                                self.probs[idx] / mass
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
        out
    }

    /// Correlator for final settings `(x, z)` with optional factors:
    /// `(-1)^a` if `with_a`, Bob's sign for index `y`, `(-1)^c` if `with_c`.
    pub fn correlator(&self, x: usize, z: usize, with_a: bool, y: Option<usize>, with_c: bool) -> f64 {
        let mut sum = 0.0;
        for a in 0..2 {
            let sa = if with_a && a == 1 { -1.0 } else { 1.0 };
            for (b, label) in self.labels.iter().enumerate() {
                let sb = y.map_or(1.0, |y| label.sign(y));
                for c in 0..2 {
                    let sc = if with_c && c == 1 { -1.0 } else { 1.0 };
                    sum += sa * sb * sc * self.get(x, z, a, b, c);
                }
            }
        }
        sum
    }

    /// `<A_x B^y C_z>`.
    pub fn full_correlator(&self, x: usize, y: usize, z: usize) -> f64 {
        self.correlator(x, z, true, Some(y), true)
    }

    // Marginals not involving one party: averaged over that party's setting,
    // exact under no-signalling.
    fn alice_marginal(&self, x: usize, y: Option<usize>) -> f64 {
        (0..self.settings).map(|z| self.correlator(x, z, true, y, false)).sum::<f64>() / self.settings as f64
    }

    fn charu_marginal(&self, y: Option<usize>, z: usize) -> f64 {
        (0..self.settings).map(|x| self.correlator(x, z, false, y, true)).sum::<f64>() / self.settings as f64
    }

    fn bob_marginal(&self, y: usize) -> f64 {
        let s = self.settings;
        (0..s)
            .flat_map(|x| (0..s).map(move |z| (x, z)))
            .map(|(x, z)| self.correlator(x, z, false, Some(y), false))
            .sum::<f64>()
            / (s * s) as f64
    }

    pub fn rows(&self) -> Vec<TableRow> {
        let s = self.settings;
        let mut rows = Vec::with_capacity(self.probs.len());
        for x in 0..s {
            for z in 0..s {
                for a in 0..2 {
                    for (b, label) in self.labels.iter().enumerate() {
                        for c in 0..2 {
                            rows.push(TableRow {
                                x,
                                z,
                                a,
                                bob_label: label.to_string(),
                                c,
                                p: self.get(x, z, a, b, c),
                            });
                        }
                    }
                }
            }
        }
        rows
    }

    /// CSV with header `x,z,a,bob_label,c,p`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        for row in self.rows() {
            writer.serialize(row).map_err(|e| Error::Serialization(e.to_string()))?;
        }
        writer.flush().map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "inequality", rename_all = "kebab-case")]
pub enum BilocalReport {
    Brgp { i: f64, j: f64, b: f64, violated: bool },
    Tgb { be: f64, z: f64, violated: bool },
}

impl BilocalReport {
    /// `B` or `BE`.
    pub fn value(&self) -> f64 {
        match self {
            BilocalReport::Brgp { b, .. } => *b,
            BilocalReport::Tgb { be, .. } => *be,
        }
    }

    /// The bilocal bound the value is compared against.
    pub fn bound(&self) -> f64 {
        match self {
            BilocalReport::Brgp { .. } => 1.0,
            BilocalReport::Tgb { z, .. } => 3.0 + 5.0 * z,
        }
    }

    /// `value - bound`; positive means violation.
    pub fn margin(&self) -> f64 {
        self.value() - self.bound()
    }

    pub fn violated(&self) -> bool {
        match self {
            BilocalReport::Brgp { violated, .. } | BilocalReport::Tgb { violated, .. } => *violated,
        }
    }
}

pub fn brgp_report(i: f64, j: f64) -> BilocalReport {
    let b = i.abs().sqrt() + j.abs().sqrt();
    BilocalReport::Brgp {
        i,
        j,
        b,
        violated: b > 1.0 + VIOLATION_MARGIN,
    }
}

pub fn tgb_report(be: f64, z: f64) -> BilocalReport {
    BilocalReport::Tgb {
        be,
        z,
        violated: be > 3.0 + 5.0 * z + VIOLATION_MARGIN,
    }
}

/// `I`, `J` and `B = sqrt|I| + sqrt|J|` from a Bell-measurement table.
pub fn brgp_from_table(table: &ProbabilityTable) -> Result<BilocalReport> {
    if table.joint != JointKind::Bsm {
        return Err(Error::WrongScenario {
            expected: "bsm",
            found: table.joint.name(),
        });
    }
    let mut i = 0.0;
    let mut j = 0.0;
    for x in 0..2 {
        for z in 0..2 {
            let parity = if (x + z) % 2 == 0 { 1.0 } else { -1.0 };
            i += table.full_correlator(x, 0, z);
            j += parity * table.full_correlator(x, 1, z);
        }
    }
    Ok(brgp_report(i / 4.0, j / 4.0))
}

/// Correlators entering `BE`, and the `Z` penalty over all others.
pub fn tgb_from_table(table: &ProbabilityTable) -> Result<BilocalReport> {
    if !matches!(table.joint, JointKind::Ejm { .. }) || table.settings != 3 {
        return Err(Error::WrongScenario {
            expected: "ejm",
            found: table.joint.name(),
        });
    }
    let r = 0..3;
    let bc: f64 = r.clone().map(|y| table.charu_marginal(Some(y), y)).sum();
    let ab: f64 = r.clone().map(|x| table.alice_marginal(x, Some(x))).sum();
    let mut tri = 0.0;
    let mut others = Vec::with_capacity(64);
    for x in 0..3 {
        for y in 0..3 {
            for z in 0..3 {
                let value = table.full_correlator(x, y, z);
                if x != y && y != z && x != z {
                    tri += value;
                } else {
                    others.push(value);
                }
            }
        }
    }
    let be = (bc - ab) / 3.0 - tri;

    for k in 0..3 {
        others.push(table.alice_marginal(k, None));
        others.push(table.charu_marginal(None, k));
        others.push(table.bob_marginal(k));
    }
    for x in 0..3 {
        for z in 0..3 {
            others.push(table.correlator(x, z, true, None, true));
        }
    }
    for u in 0..3 {
        for w in 0..3 {
            if u != w {
                others.push(table.alice_marginal(u, Some(w)));
                others.push(table.charu_marginal(Some(u), w));
            }
        }
    }
    let z = others.iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(tgb_report(be, z))
}

/// Evaluates the scenario's own inequality.
pub fn report_from_table(table: &ProbabilityTable) -> Result<BilocalReport> {
    match table.joint {
        JointKind::Bsm => brgp_from_table(table),
        JointKind::Ejm { .. } => tgb_from_table(table),
    }
}

pub fn simulate(config: &ScenarioConfig) -> Result<BilocalReport> {
    report_from_table(&averaged_table(config)?)
}

/// BRGP value for every relabeling of Bob's Bell outcomes.
pub fn label_map_scores(config: &ScenarioConfig) -> Result<Vec<(Vec<usize>, f64)>> {
    let basis = JointBasis::new(config.joint)?;
    label_permutations(&basis)
        .into_iter()
        .map(|(perm, relabeled)| {
            let table = Engine::with_basis(config, relabeled)?.averaged_table()?;
            Ok((perm, report_from_table(&table)?.value()))
        })
        .collect()
}

/// Pauli coefficients `R[i][k] = tr(rho σ_i ⊗ σ_k)`, index 0 is the identity.
type PauliTensor = [[f64; 4]; 4];

fn pauli_basis() -> [ComplexMatrix; 4] {
    [ComplexMatrix::identity(2), pauli_x(), pauli_y(), pauli_z()]
}

pub(crate) fn bloch_vector(direction: &ComplexMatrix) -> [f64; 3] {
    let p = pauli_basis();
    [1, 2, 3].map(|k| direction.matmul(&p[k]).trace().re / 2.0)
}

/// Setting-averaged unconditional map of one round, acting on Pauli indices.
pub(crate) fn round_transfer(round: &RoundSpec, party: Party) -> Result<[[f64; 4]; 4]> {
    let f = round.quality();
    let s = round.setting_count();
    let mut m = [[0.0; 4]; 4];
    m[0][0] = 1.0;
    for setting in 0..s {
        let n = bloch_vector(&round.direction(setting, party)?);
        for i in 0..3 {
            for k in 0..3 {
                let id = if i == k { f } else { 0.0 };
                m[i + 1][k + 1] += (id + (1.0 - f) * n[i] * n[k]) / s as f64;
            }
        }
    }
    Ok(m)
}

/// Correlation-tensor evaluation of the same averaged table.
///
/// Every intermediate map is unital, so it acts linearly on the Pauli
/// coefficients of each party; this avoids rebuilding density matrices for
/// every history and is what the solver iterates on.
pub struct BlochEngine {
    joint: JointKind,
    labels: Vec<BobLabel>,
    branches: Vec<PauliTensor>,
}

impl BlochEngine {
    pub fn new(source1: &SourceSpec, source2: &SourceSpec, joint: JointKind) -> Result<Self> {
        let basis = JointBasis::new(joint)?;
        let rho4 = network_state(source1, source2)?;
        let p = pauli_basis();
        let branches = (0..basis.elements.len())
            .map(|b| {
                let branch = condition_on_bob(&rho4, &basis, b)?;
                let mut t = [[0.0; 4]; 4];
                for (i, row) in t.iter_mut().enumerate() {
                    for (k, slot) in row.iter_mut().enumerate() {
                        *slot = branch.state.matmul(&kron(&p[i], &p[k])).trace().re;
                    }
                }
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            joint,
            labels: basis.labels,
            branches,
        })
    }

    pub fn for_config(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        Self::new(&config.source1, &config.source2, config.joint)
    }

    pub fn joint(&self) -> JointKind {
        self.joint
    }

    /// `sum_b sign_b(y) R_b` restricted to the correlation block, before any chain.
    pub fn signed_correlations(&self, y: usize) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (label, t) in self.labels.iter().zip(&self.branches) {
            let sign = label.sign(y);
            for (i, row) in out.iter_mut().enumerate() {
                for (k, slot) in row.iter_mut().enumerate() {
                    *slot += sign * t[i + 1][k + 1];
                }
            }
        }
        out
    }

    /// Averaged table for the given chains, sharing the precomputed Bob branches.
    pub fn table(&self, alice: &[RoundSpec], charu: &[RoundSpec]) -> Result<ProbabilityTable> {
        let s = self.joint.setting_count();
        let (last_a, prior_a) = alice.split_last().ok_or_else(|| Error::Config("alice chain is empty".into()))?;
        let (last_c, prior_c) = charu.split_last().ok_or_else(|| Error::Config("charu chain is empty".into()))?;
        for round in alice.iter().chain(charu) {
            round.validate()?;
            if round.setting_count() != s {
                return Err(Error::Config(format!(
                    "{} scenario needs {s} settings per round, a round has {}",
                    self.joint.name(),
                    round.setting_count()
                )));
            }
        }
        let alice_maps = prior_a.iter().map(|r| round_transfer(r, Party::Alice)).collect::<Result<Vec<_>>>()?;
        let charu_maps = prior_c.iter().map(|r| round_transfer(r, Party::Charu)).collect::<Result<Vec<_>>>()?;

        let evolved: Vec<PauliTensor> = self
            .branches
            .iter()
            .map(|t0| {
                let mut t = *t0;
                for m in &alice_maps {
                    t = mat4(m, &t);
                }
                for m in &charu_maps {
                    t = mat4(&t, &transpose4(m));
                }
                t
            })
            .collect();

        let mut table = ProbabilityTable::zeros(self.joint, self.labels.clone());
        let outcomes = self.labels.len();
        for x in 0..s {
            let na = bloch_vector(&last_a.direction(x, Party::Alice)?);
            for z in 0..s {
                let nc = bloch_vector(&last_c.direction(z, Party::Charu)?);
                for (b, t) in evolved.iter().enumerate() {
                    let alice_part: f64 = (0..3).map(|i| na[i] * t[i + 1][0]).sum();
                    let charu_part: f64 = (0..3).map(|k| nc[k] * t[0][k + 1]).sum();
                    let mut both = 0.0;
                    for i in 0..3 {
                        for k in 0..3 {
                            both += na[i] * nc[k] * t[i + 1][k + 1];
                        }
                    }
                    for a in 0..2 {
                        let sa = if a == 0 { last_a.sharpness } else { -last_a.sharpness };
                        for c in 0..2 {
                            let sc = if c == 0 { last_c.sharpness } else { -last_c.sharpness };
                            let p = (t[0][0] + sa * alice_part + sc * charu_part + sa * sc * both) / 4.0;
                            table.probs[ProbabilityTable::offset(s, outcomes, x, z, a, b, c)] = p;
                        }
                    }
                }
            }
        }
        Ok(table)
    }

    pub fn report(&self, alice: &[RoundSpec], charu: &[RoundSpec]) -> Result<BilocalReport> {
        report_from_table(&self.table(alice, charu)?)
    }
}

fn mat4(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = (0..4).map(|j| a[i][j] * b[j][k]).sum();
        }
    }
    out
}

fn transpose4(a: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            out[k][i] = a[i][k];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurements::bell_basis;
    use crate::states::BaseState;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    fn me() -> SourceSpec {
        SourceSpec::maximally_entangled(BaseState::PhiPlus)
    }

    fn brgp_config(source: SourceSpec, alice: &[f64], charu: &[f64]) -> ScenarioConfig {
        ScenarioConfig {
            source1: source,
            source2: source,
            joint: JointKind::Bsm,
            alice_rounds: alice.iter().map(|&g| RoundSpec::in_plane(FRAC_PI_4, g).unwrap()).collect(),
            charu_rounds: charu.iter().map(|&g| RoundSpec::in_plane(FRAC_PI_4, g).unwrap()).collect(),
        }
    }

    #[test]
    fn swapping_two_bell_pairs() {
        let rho4 = network_state(&me(), &me()).unwrap();
        let basis = bell_basis();
        for b in 0..4 {
            let branch = condition_on_bob(&rho4, &basis, b).unwrap();
            assert_relative_eq!(branch.probability, 0.25, epsilon = 1e-14);
            let bell = basis.projector(b).scale(0.25);
            assert!(branch.state.max_abs_diff(&bell) < 1e-14, "outcome {b}");
        }
    }

    #[test]
    fn swapping_werner_pairs_multiplies_visibility() {
        let v = 0.7;
        let w = SourceSpec::werner(v, BaseState::PhiPlus).unwrap();
        let rho4 = network_state(&w, &w).unwrap();
        let basis = bell_basis();
        for b in 0..4 {
            let branch = condition_on_bob(&rho4, &basis, b).unwrap();
            let expected =
                &basis.projector(b).scale(v * v) + &ComplexMatrix::identity(4).scale((1.0 - v * v) / 4.0);
            assert!(branch.state.scale(4.0).max_abs_diff(&expected) < 1e-14);
        }
    }

    #[test]
    fn single_round_has_empty_histories() {
        let cfg = brgp_config(me(), &[1.0], &[1.0]);
        let engine = Engine::new(&cfg).unwrap();
        let state = engine.run_chain(2, &[], &[]).unwrap();
        assert!(state.max_abs_diff(&engine.branch(2).state) < 1e-15);
        assert!(matches!(engine.run_chain(0, &[0], &[]), Err(Error::Config(_))));
    }

    #[test]
    fn undisturbing_round_is_invisible() {
        // G -> 0 means F = 1: intermediate Charu round leaves the state alone
        let tiny = 1e-9;
        let with = Engine::new(&brgp_config(me(), &[1.0], &[tiny, 0.8])).unwrap();
        let without = Engine::new(&brgp_config(me(), &[1.0], &[0.8])).unwrap();
        for z1 in 0..2 {
            let a = with.run_chain(1, &[], &[z1]).unwrap();
            let b = without.run_chain(1, &[], &[]).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one_per_setting() {
        let cfg = brgp_config(SourceSpec::new(0.3, 0.8, BaseState::PhiPlus).unwrap(), &[0.7, 0.9], &[0.6]);
        let engine = Engine::new(&cfg).unwrap();
        for x in 0..2 {
            for z in 0..2 {
                let mut total = 0.0;
                for b in 0..4 {
                    for a in 0..2 {
                        for c in 0..2 {
                            total += engine.joint_probability(b, &[1, x], &[z], a, c).unwrap();
                        }
                    }
                }
                assert_relative_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_precision_outcome_is_uniform() {
        let cfg = brgp_config(me(), &[1e-12], &[1.0]);
        let engine = Engine::new(&cfg).unwrap();
        for b in 0..4 {
            let p0: f64 = (0..2).map(|c| engine.joint_probability(b, &[0], &[1], 0, c).unwrap()).sum();
            let p1: f64 = (0..2).map(|c| engine.joint_probability(b, &[0], &[1], 1, c).unwrap()).sum();
            assert_relative_eq!(p0, p1, epsilon = 1e-10);
        }
    }

    #[test]
    fn sharp_maximally_entangled_gives_root_two() {
        let report = simulate(&brgp_config(me(), &[1.0], &[1.0])).unwrap();
        let BilocalReport::Brgp { i, j, b, violated } = report else {
            panic!("expected a BRGP report");
        };
        assert_relative_eq!(i, 0.5, epsilon = 1e-12);
        assert_relative_eq!(j.abs(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(b, SQRT_2, epsilon = 1e-12);
        assert!(violated);
    }

    #[test]
    fn first_critical_charu_sits_on_the_bound() {
        let report = simulate(&brgp_config(me(), &[1.0], &[0.5])).unwrap();
        assert_relative_eq!(report.value(), 1.0, epsilon = 1e-12);
        assert!(!report.violated());
    }

    #[test]
    fn product_sources_do_not_violate() {
        let product = SourceSpec::new(1.0, 1.0, BaseState::PhiPlus).unwrap();
        let report = simulate(&brgp_config(product, &[1.0], &[1.0])).unwrap();
        assert!(report.value() <= 1.0);
    }

    #[test]
    fn averaging_is_identity_for_single_rounds() {
        let cfg = brgp_config(me(), &[0.9], &[0.8]);
        let engine = Engine::new(&cfg).unwrap();
        let table = engine.averaged_table().unwrap();
        for b in 0..4 {
            let direct = engine.joint_probability(b, &[1], &[0], 0, 1).unwrap();
            assert_relative_eq!(table.get(1, 0, 0, b, 1), direct, epsilon = 1e-15);
        }
    }

    #[test]
    fn averaging_weight_is_uniform_over_histories() {
        let cfg = brgp_config(me(), &[0.6, 1.0], &[0.7, 0.9]);
        let engine = Engine::new(&cfg).unwrap();
        let table = engine.averaged_table().unwrap();
        let mut manual = 0.0;
        for x1 in 0..2 {
            for z1 in 0..2 {
                manual += engine.joint_probability(3, &[x1, 0], &[z1, 1], 1, 0).unwrap();
            }
        }
        assert_relative_eq!(table.get(0, 1, 1, 3, 0), manual / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn tables_are_normalized_and_nonnegative() {
        let cfg = brgp_config(SourceSpec::new(0.2, 0.6, BaseState::PhiPlus).unwrap(), &[0.5, 0.8], &[0.4, 0.6, 0.9]);
        let table = averaged_table(&cfg).unwrap();
        assert!(table.normalization_error() < 1e-10);
        assert!(table.min_entry() >= -1e-12);
    }

    #[test]
    fn wrong_scenario_is_rejected() {
        let table = averaged_table(&brgp_config(me(), &[1.0], &[1.0])).unwrap();
        assert!(matches!(tgb_from_table(&table), Err(Error::WrongScenario { .. })));
    }

    #[test]
    fn chains_must_match_setting_space() {
        let mut cfg = brgp_config(me(), &[1.0], &[1.0]);
        cfg.charu_rounds[0] = RoundSpec::pauli(1.0).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.charu_rounds.clear();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn csv_layout() {
        let table = averaged_table(&brgp_config(me(), &[1.0], &[1.0])).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,z,a,bob_label,c,p"));
        assert_eq!(text.lines().count(), 1 + 4 * 16);
        assert!(!text.contains('\r'));
        let back = ProbabilityTable::from_json(&table.to_json().unwrap()).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn bloch_engine_matches_brute_force() {
        let nme = SourceSpec::new(0.3, 0.85, BaseState::PhiPlus).unwrap();
        let other = SourceSpec::new(0.6, 0.9, BaseState::PsiMinus).unwrap();
        let cfg = ScenarioConfig {
            source1: nme,
            source2: other,
            joint: JointKind::Bsm,
            alice_rounds: vec![RoundSpec::in_plane(0.3, 0.6).unwrap(), RoundSpec::in_plane(1.1, 0.9).unwrap()],
            charu_rounds: vec![
                RoundSpec::in_plane(0.5, 0.4).unwrap(),
                RoundSpec::in_plane(0.9, 0.7).unwrap(),
                RoundSpec::in_plane(0.2, 1.0).unwrap(),
            ],
        };
        let brute = averaged_table(&cfg).unwrap();
        let fast = BlochEngine::for_config(&cfg).unwrap().table(&cfg.alice_rounds, &cfg.charu_rounds).unwrap();
        for (p, q) in brute.probs.iter().zip(&fast.probs) {
            assert!((p - q).abs() < 1e-13);
        }

        let ejm = ScenarioConfig {
            source1: nme,
            source2: other,
            joint: JointKind::Ejm { theta: 0.4 },
            alice_rounds: vec![RoundSpec::pauli(0.7).unwrap(), RoundSpec::pauli(1.0).unwrap()],
            charu_rounds: vec![RoundSpec::pauli(0.5).unwrap(), RoundSpec::pauli(0.8).unwrap()],
        };
        let brute = averaged_table(&ejm).unwrap();
        let fast = BlochEngine::for_config(&ejm).unwrap().table(&ejm.alice_rounds, &ejm.charu_rounds).unwrap();
        for (p, q) in brute.probs.iter().zip(&fast.probs) {
            assert!((p - q).abs() < 1e-13);
        }
    }
}
