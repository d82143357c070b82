//! Bob's joint bases and the unsharp single-qubit measurements of the outer
//! parties.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::qmath::{entanglement_entropy, kron, kron_vec, pauli_x, pauli_y, pauli_z, ComplexMatrix, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JointKind {
    Bsm,
    Ejm { theta: f64 },
}

impl JointKind {
    /// Number of measurement settings each outer party chooses from.
    pub fn setting_count(&self) -> usize {
        match self {
            JointKind::Bsm => 2,
            JointKind::Ejm { .. } => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            JointKind::Bsm => "bsm",
            JointKind::Ejm { .. } => "ejm",
        }
    }
}

/// Outcome label attached to one element of Bob's basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BobLabel {
    /// Bell outcome `b0 b1`.
    Bits([u8; 2]),
    /// Tetrahedron outcome `(b1, b2, b3)` with entries `±1`.
    Signs([i8; 3]),
}

impl BobLabel {
    /// The `±1` weight Bob's outcome contributes to a correlator with index `y`:
    /// `(-1)^{b^y}` for Bell bits, `b^y` for tetrahedron signs.
    pub fn sign(&self, y: usize) -> f64 {
        match self {
            BobLabel::Bits(bits) => {
                if bits[y] == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            BobLabel::Signs(signs) => f64::from(signs[y]),
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            BobLabel::Bits(_) => 2,
            BobLabel::Signs(_) => 3,
        }
    }
}

impl std::fmt::Display for BobLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BobLabel::Bits([b0, b1]) => write!(f, "{b0}{b1}"),
            BobLabel::Signs(s) => {
                let sym = |x: i8| if x > 0 { '+' } else { '-' };
                write!(f, "{}{}{}", sym(s[0]), sym(s[1]), sym(s[2]))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointBasis {
    pub kind: JointKind,
    pub elements: Vec<Vec<Complex64>>,
    pub labels: Vec<BobLabel>,
}

impl JointBasis {
    pub fn new(kind: JointKind) -> Result<Self> {
        match kind {
            JointKind::Bsm => Ok(bell_basis()),
            JointKind::Ejm { theta } => ejm_basis(theta),
        }
    }

    pub fn projector(&self, index: usize) -> ComplexMatrix {
        ComplexMatrix::outer(&self.elements[index])
    }

    /// Same vectors with the labels permuted by `perm` (element `i` gets label `perm[i]`).
    pub fn relabeled(&self, perm: &[usize]) -> JointBasis {
        JointBasis {
            kind: self.kind,
            elements: self.elements.clone(),
            labels: perm.iter().map(|&p| self.labels[p]).collect(),
        }
    }

    pub fn element_entropies(&self) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| entanglement_entropy(e).expect("basis elements are normalized"))
            .collect()
    }
}

/// Bell basis with labels `phi+ -> 00, phi- -> 01, psi+ -> 10, psi- -> 11`.
pub fn bell_basis() -> JointBasis {
    let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let elements = vec![
        vec![s, ZERO, ZERO, s],
        vec![s, ZERO, ZERO, -s],
        vec![ZERO, s, s, ZERO],
        vec![ZERO, s, -s, ZERO],
    ];
    let labels = vec![
        BobLabel::Bits([0, 0]),
        BobLabel::Bits([0, 1]),
        BobLabel::Bits([1, 0]),
        BobLabel::Bits([1, 1]),
    ];
    JointBasis {
        kind: JointKind::Bsm,
        elements,
        labels,
    }
}

const TETRA_SIGNS: [[i8; 3]; 4] = [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TetraVertex {
    /// Unit Bloch vector.
    pub bloch: [f64; 3],
    pub signs: [i8; 3],
    /// z-component of the Bloch vector.
    pub r: f64,
    /// Azimuth in the x-y plane.
    pub azimuth: f64,
}

/// Vertex `b` (1-based) of the regular tetrahedron, scaled onto the Bloch sphere.
pub fn tetra_vertex(b: usize) -> Result<TetraVertex> {
    if !(1..=4).contains(&b) {
        return Err(Error::Config(format!("tetrahedron vertex index {b} not in 1..=4")));
    }
    let signs = TETRA_SIGNS[b - 1];
    let norm = 3f64.sqrt();
    let bloch = signs.map(|s| f64::from(s) / norm);
    Ok(TetraVertex {
        bloch,
        signs,
        r: bloch[2],
        azimuth: bloch[1].atan2(bloch[0]),
    })
}

// |+m> and |-m> for a Bloch direction given in cylindrical form.
fn bloch_kets(r: f64, azimuth: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let lo = Complex64::from_polar(1.0, -azimuth / 2.0);
    let hi = Complex64::from_polar(1.0, azimuth / 2.0);
    let up = ((1.0 + r) / 2.0).sqrt();
    let down = ((1.0 - r) / 2.0).sqrt();
    (vec![lo * up, hi * down], vec![lo * down, -hi * up])
}

/// Elegant joint measurement basis; `theta = pi/2` has maximally entangled elements.
pub fn ejm_basis(theta: f64) -> Result<JointBasis> {
    check_range("ejm_theta", theta, 0.0, PI / 2.0)?;
    let phase = Complex64::from_polar(1.0, theta);
    let denom = 2.0 * 2f64.sqrt();
    let same = (Complex64::new(3f64.sqrt(), 0.0) + phase) / denom;
    let flip = (Complex64::new(3f64.sqrt(), 0.0) - phase) / denom;

    let mut elements = Vec::with_capacity(4);
    let mut labels = Vec::with_capacity(4);
    for b in 1..=4 {
        let vertex = tetra_vertex(b)?;
        let (plus, minus) = bloch_kets(vertex.r, vertex.azimuth);
        let first = kron_vec(&plus, &minus);
        let second = kron_vec(&minus, &plus);
        elements.push(first.iter().zip(&second).map(|(x, y)| same * x + flip * y).collect());
        labels.push(BobLabel::Signs(vertex.signs));
    }
    Ok(JointBasis {
        kind: JointKind::Ejm { theta },
        elements,
        labels,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Charu,
}

impl Party {
    /// Qubit index inside the two-qubit A-C state.
    pub fn qubit(&self) -> usize {
        match self {
            Party::Alice => 0,
            Party::Charu => 1,
        }
    }
}

/// In-plane observable `cos(a) σz ∓ (-1)^s sin(a) σx`: minus for Alice, plus for Charu.
pub fn observable(angle: f64, setting: usize, party: Party) -> Result<ComplexMatrix> {
    if setting > 1 {
        return Err(Error::Config(format!("binary setting {setting} out of range")));
    }
    let parity = if setting == 0 { 1.0 } else { -1.0 };
    let sign = match party {
        Party::Alice => -parity,
        Party::Charu => parity,
    };
    Ok(&pauli_z().scale(angle.cos()) + &pauli_x().scale(sign * angle.sin()))
}

/// Pauli observable for a ternary setting: 0 -> σx, 1 -> σy, 2 -> σz.
pub fn pauli_observable(setting: usize) -> Result<ComplexMatrix> {
    match setting {
        0 => Ok(pauli_x()),
        1 => Ok(pauli_y()),
        2 => Ok(pauli_z()),
        _ => Err(Error::Config(format!("ternary setting {setting} out of range"))),
    }
}

/// How a party picks its measurement direction in every round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "angle", rename_all = "kebab-case")]
pub enum Axis {
    /// Angle in the x-z plane, binary settings.
    InPlane(f64),
    /// σx, σy, σz for settings 0, 1, 2.
    Pauli,
}

/// One observer's round: measurement axis and precision `G`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSpec {
    pub axis: Axis,
    #[serde(rename = "G")]
    pub sharpness: f64,
}

impl RoundSpec {
    pub fn new(axis: Axis, sharpness: f64) -> Result<Self> {
        let round = Self { axis, sharpness };
        round.validate()?;
        Ok(round)
    }

    pub fn in_plane(angle: f64, sharpness: f64) -> Result<Self> {
        Self::new(Axis::InPlane(angle), sharpness)
    }

    pub fn pauli(sharpness: f64) -> Result<Self> {
        Self::new(Axis::Pauli, sharpness)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sharpness > 0.0 && self.sharpness <= 1.0) {
            return Err(Error::Param {
                name: "G",
                value: self.sharpness,
            });
        }
        if let Axis::InPlane(a) = self.axis {
            if !a.is_finite() {
                return Err(Error::Param { name: "angle", value: a });
            }
        }
        Ok(())
    }

    /// Quality factor `F = sqrt(1 - G^2)`.
    pub fn quality(&self) -> f64 {
        quality_factor(self.sharpness)
    }

    pub fn setting_count(&self) -> usize {
        match self.axis {
            Axis::InPlane(_) => 2,
            Axis::Pauli => 3,
        }
    }

    pub fn direction(&self, setting: usize, party: Party) -> Result<ComplexMatrix> {
        match self.axis {
            Axis::InPlane(angle) => observable(angle, setting, party),
            Axis::Pauli => pauli_observable(setting),
        }
    }
}

pub fn quality_factor(g: f64) -> f64 {
    (1.0 - g * g).max(0.0).sqrt()
}

fn check_direction(direction: &ComplexMatrix) -> Result<()> {
    if direction.dim() != 2 || !direction.is_hermitian(1e-12) {
        return Err(Error::Dimension("direction must be a 2x2 Hermitian observable".into()));
    }
    let square = direction.matmul(direction);
    if square.max_abs_diff(&ComplexMatrix::identity(2)) > 1e-10 {
        return Err(Error::State("direction must square to the identity".into()));
    }
    Ok(())
}

/// Sharp projectors `(I ± O)/2`.
pub fn projectors(direction: &ComplexMatrix) -> [ComplexMatrix; 2] {
    let id = ComplexMatrix::identity(2);
    [(&id + direction).scale(0.5), (&id - direction).scale(0.5)]
}

/// Unsharp effects `E^a = G P^a + (1 - G) I/2`.
pub fn povm_effects(direction: &ComplexMatrix, g: f64) -> Result<[ComplexMatrix; 2]> {
    if !(g > 0.0 && g <= 1.0) {
        return Err(Error::Param { name: "G", value: g });
    }
    check_direction(direction)?;
    let noise = ComplexMatrix::identity(2).scale((1.0 - g) / 2.0);
    let [p0, p1] = projectors(direction);
    Ok([&p0.scale(g) + &noise, &p1.scale(g) + &noise])
}

fn embed(op: &ComplexMatrix, qubit: usize, dim: usize) -> Result<ComplexMatrix> {
    let qubits = match dim {
        2 => 1,
        4 => 2,
        16 => 4,
        _ => return Err(Error::Dimension(format!("unsupported dimension {dim}"))),
    };
    if qubit >= qubits {
        return Err(Error::Dimension(format!("qubit {qubit} out of range for {qubits} qubits")));
    }
    let mut out = ComplexMatrix::identity(1);
    for q in 0..qubits {
        let factor = if q == qubit { op.clone() } else { ComplexMatrix::identity(2) };
        out = kron(&out, &factor);
    }
    Ok(out)
}

// P0 rho P0 and P1 rho P1 for the projectors of `direction` on `qubit`.
fn dephased_parts(rho: &ComplexMatrix, qubit: usize, direction: &ComplexMatrix) -> Result<[ComplexMatrix; 2]> {
    check_direction(direction)?;
    let [p0, p1] = projectors(direction);
    let e0 = embed(&p0, qubit, rho.dim())?;
    let e1 = embed(&p1, qubit, rho.dim())?;
    Ok([e0.matmul(rho).matmul(&e0), e1.matmul(rho).matmul(&e1)])
}

/// Outcome-averaged Lüders update `F rho + (1 - F)(P0 rho P0 + P1 rho P1)`.
pub fn weak_map_unconditional(
    rho: &ComplexMatrix,
    qubit: usize,
    direction: &ComplexMatrix,
    quality: f64,
) -> Result<ComplexMatrix> {
    check_range("F", quality, 0.0, 1.0)?;
    let [d0, d1] = dephased_parts(rho, qubit, direction)?;
    Ok(&rho.scale(quality) + &(&d0 + &d1).scale(1.0 - quality))
}

/// Unnormalized post-measurement state for outcome `a`; its trace is the outcome probability.
pub fn weak_map_conditional(
    rho: &ComplexMatrix,
    qubit: usize,
    direction: &ComplexMatrix,
    g: f64,
    outcome: usize,
) -> Result<ComplexMatrix> {
    if !(g > 0.0 && g <= 1.0) {
        return Err(Error::Param { name: "G", value: g });
    }
    if outcome > 1 {
        return Err(Error::Config(format!("outcome {outcome} is not a bit")));
    }
    let f = quality_factor(g);
    let sign = if outcome == 0 { 1.0 } else { -1.0 };
    let [d0, d1] = dephased_parts(rho, qubit, direction)?;
    let mut out = rho.scale(f / 2.0);
    out = &out + &d0.scale((1.0 + sign * g - f) / 2.0);
    out = &out + &d1.scale((1.0 - sign * g - f) / 2.0);
    Ok(out)
}

/// All 24 relabelings of a basis, for fixing a label map empirically.
pub fn label_permutations(basis: &JointBasis) -> Vec<(Vec<usize>, JointBasis)> {
    let mut perms = Vec::new();
    permute(&mut (0..basis.labels.len()).collect::<Vec<_>>(), 0, &mut perms);
    perms
        .into_iter()
        .map(|p| {
            let relabeled = basis.relabeled(&p);
            (p, relabeled)
        })
        .collect()
}

fn permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, out);
        items.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gram_is_identity(basis: &JointBasis) -> bool {
        basis.elements.iter().enumerate().all(|(i, u)| {
            basis.elements.iter().enumerate().all(|(j, v)| {
                let ip: Complex64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                (ip - Complex64::new(want, 0.0)).norm() < 1e-12
            })
        })
    }

    fn completeness(basis: &JointBasis) -> f64 {
        let sum = (0..4).fold(ComplexMatrix::zeros(4), |acc, i| &acc + &basis.projector(i));
        sum.max_abs_diff(&ComplexMatrix::identity(4))
    }

    #[test]
    fn bell_basis_is_orthonormal_and_maximally_entangled() {
        let basis = bell_basis();
        assert!(gram_is_identity(&basis));
        for e in basis.element_entropies() {
            assert_relative_eq!(e, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tetrahedron_geometry() {
        let v1 = tetra_vertex(1).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert_relative_eq!(v1.r, s, epsilon = 1e-15);
        for k in 0..3 {
            assert_relative_eq!(v1.bloch[k], s, epsilon = 1e-15);
        }
        let verts: Vec<_> = (1..=4).map(|b| tetra_vertex(b).unwrap().bloch).collect();
        for k in 0..3 {
            assert!(verts.iter().map(|v| v[k]).sum::<f64>().abs() < 1e-15);
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                let dot: f64 = (0..3).map(|k| verts[i][k] * verts[j][k]).sum();
                assert_relative_eq!(dot, -1.0 / 3.0, epsilon = 1e-15);
            }
        }
        assert!(tetra_vertex(0).is_err());
        assert!(tetra_vertex(5).is_err());
    }

    #[test]
    fn ejm_entanglement_endpoints() {
        let at_zero = ejm_basis(0.0).unwrap();
        for e in at_zero.element_entropies() {
            assert!((e - 0.355).abs() < 5e-3, "{e}");
        }
        let ents = at_zero.element_entropies();
        assert!(ents.iter().all(|e| (e - ents[0]).abs() < 1e-10));
        for e in ejm_basis(PI / 2.0).unwrap().element_entropies() {
            assert_relative_eq!(e, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn ejm_is_complete_for_all_theta() {
        for k in 0..=20 {
            let theta = PI / 2.0 * k as f64 / 20.0;
            let basis = ejm_basis(theta).unwrap();
            assert!(gram_is_identity(&basis));
            assert!(completeness(&basis) < 1e-12);
        }
        assert!(ejm_basis(2.0).is_err());
    }

    #[test]
    fn ejm_element_entanglement_increases_with_theta() {
        let mut last = -1.0;
        for k in 0..50 {
            let theta = PI / 2.0 * k as f64 / 49.0;
            let e = ejm_basis(theta).unwrap().element_entropies()[0];
            assert!(e > last, "theta={theta}");
            last = e;
        }
    }

    #[test]
    fn observable_sign_conventions() {
        assert_eq!(observable(0.0, 0, Party::Alice).unwrap(), pauli_z());
        assert_eq!(observable(0.0, 1, Party::Alice).unwrap(), pauli_z());
        let q = PI / 4.0;
        let s = FRAC_1_SQRT_2;
        let alice = observable(q, 0, Party::Alice).unwrap();
        assert!(alice.max_abs_diff(&(&pauli_z() - &pauli_x()).scale(s)) < 1e-15);
        let charu = observable(q, 0, Party::Charu).unwrap();
        assert!(charu.max_abs_diff(&(&pauli_z() + &pauli_x()).scale(s)) < 1e-15);
        let eig = observable(0.37, 1, Party::Charu).unwrap().hermitian_eigenvalues();
        assert_relative_eq!(eig[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(eig[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn povm_examples() {
        let [e0, e1] = povm_effects(&pauli_z(), 1.0).unwrap();
        assert_eq!(e0, ComplexMatrix::diag(&[1.0, 0.0]));
        assert_eq!(e1, ComplexMatrix::diag(&[0.0, 1.0]));
        let [e0, _] = povm_effects(&pauli_z(), 0.5).unwrap();
        assert!(e0.max_abs_diff(&ComplexMatrix::diag(&[0.75, 0.25])) < 1e-15);
        for k in 1..=20 {
            let g = k as f64 / 20.0;
            let dir = observable(0.9, 1, Party::Alice).unwrap();
            let [e0, e1] = povm_effects(&dir, g).unwrap();
            assert!((&e0 + &e1).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
            for e in [e0, e1] {
                let eig = e.hermitian_eigenvalues();
                assert_relative_eq!(eig[0], (1.0 - g) / 2.0, epsilon = 1e-12);
                assert_relative_eq!(eig[1], (1.0 + g) / 2.0, epsilon = 1e-12);
            }
        }
        assert!(povm_effects(&pauli_z(), 0.0).is_err());
        assert!(povm_effects(&pauli_z(), 1.2).is_err());
    }

    #[test]
    fn weak_map_limits() {
        let rho = ComplexMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 0) => Complex64::new(0.6, 0.0),
            (1, 1) => Complex64::new(0.4, 0.0),
            (0, 1) => Complex64::new(0.2, 0.1),
            _ => Complex64::new(0.2, -0.1),
        });
        let same = weak_map_unconditional(&rho, 0, &pauli_z(), 1.0).unwrap();
        assert!(same.max_abs_diff(&rho) < 1e-15);
        let dephased = weak_map_unconditional(&rho, 0, &pauli_z(), 0.0).unwrap();
        assert!(dephased.max_abs_diff(&ComplexMatrix::diag(&[0.6, 0.4])) < 1e-15);
        assert!(weak_map_unconditional(&rho, 1, &pauli_z(), 0.5).is_err());
    }

    #[test]
    fn conditional_map_examples() {
        let up = ComplexMatrix::diag(&[1.0, 0.0]);
        let a0 = weak_map_conditional(&up, 0, &pauli_z(), 1.0, 0).unwrap();
        let a1 = weak_map_conditional(&up, 0, &pauli_z(), 1.0, 1).unwrap();
        assert_relative_eq!(a0.trace().re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(a1.trace().re, 0.0, epsilon = 1e-15);

        let mixed = ComplexMatrix::identity(2).scale(0.5);
        let half = weak_map_conditional(&mixed, 0, &pauli_z(), 0.5, 0).unwrap();
        assert_relative_eq!(half.trace().re, 0.5, epsilon = 1e-15);
        assert!(weak_map_conditional(&mixed, 0, &pauli_z(), 0.5, 2).is_err());
    }

    #[test]
    fn label_permutations_cover_all_orders() {
        let perms = label_permutations(&bell_basis());
        assert_eq!(perms.len(), 24);
        let mut seen: Vec<_> = perms.iter().map(|(p, _)| p.clone()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 24);
    }
}
