//! Truncated two-mode Fock space: ladder operators, states, tensor embedding,
//! partial trace and partial transpose.
//!
//! Joint basis ordering is cavity-major: `index = n_cav * dim_mech + n_mech`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, hermiticity_defect, outer, trace, CMatrix, CVector, C64, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockSpace {
    pub dim_cavity: usize,
    pub dim_mech: usize,
}

impl FockSpace {
    pub fn new(dim_cavity: usize, dim_mech: usize) -> Result<Self> {
        if dim_cavity < 2 || dim_mech < 2 {
            return Err(Error::InvalidSpace(format!(
                "cutoffs must be at least 2 (got cavity {dim_cavity}, mech {dim_mech})"
            )));
        }
        Ok(Self { dim_cavity, dim_mech })
    }

    pub fn dim(&self) -> usize {
        self.dim_cavity * self.dim_mech
    }

    #[inline]
    pub fn index(&self, n_cav: usize, n_mech: usize) -> usize {
        n_cav * self.dim_mech + n_mech
    }

    /// Splits a joint index into `(n_cav, n_mech)`.
    #[inline]
    pub fn levels(&self, index: usize) -> (usize, usize) {
        (index / self.dim_mech, index % self.dim_mech)
    }

    pub fn mode_dim(&self, mode: Mode) -> usize {
        match mode {
            Mode::Cavity => self.dim_cavity,
            Mode::Mech => self.dim_mech,
        }
    }

    /// Product basis state `|n_cav⟩|n_mech⟩`.
    pub fn basis(&self, n_cav: usize, n_mech: usize) -> State {
        let mut v = CVector::zeros(self.dim());
        v[self.index(n_cav, n_mech)] = c(1.0, 0.0);
        State::Pure(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cavity,
    Mech,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderKind {
    Annihilation,
    Creation,
    Number,
}

/// Which Hilbert space an [`Operator`] acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceTag {
    Mode(usize),
    Joint(FockSpace),
}

impl SpaceTag {
    pub fn dim(&self) -> usize {
        match self {
            SpaceTag::Mode(d) => *d,
            SpaceTag::Joint(s) => s.dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub matrix: CMatrix,
    pub space: SpaceTag,
}

impl Operator {
    pub fn new(matrix: CMatrix, space: SpaceTag) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidArgument("operator matrix must be square".into()));
        }
        if matrix.nrows() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: matrix.nrows() });
        }
        Ok(Self { matrix, space })
    }

    pub fn identity(space: SpaceTag) -> Self {
        let d = space.dim();
        Self { matrix: CMatrix::identity(d, d), space }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), space: self.space }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.matrix)
    }

    pub fn apply(&self, state: &State) -> Result<State> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: state.dim() });
        }
        Ok(match state {
            State::Pure(v) => State::Pure(&self.matrix * v),
            State::Mixed(r) => State::Mixed(&self.matrix * r * self.matrix.adjoint()),
        })
    }

    pub fn expectation(&self, state: &State) -> C64 {
        match state {
            State::Pure(v) => (v.adjoint() * &self.matrix * v)[(0, 0)],
            State::Mixed(r) => trace(&(&self.matrix * r)),
        }
    }
}

impl std::ops::Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator product across different spaces");
        Operator { matrix: &self.matrix * &rhs.matrix, space: self.space }
    }
}

/// A pure (ket) or mixed (density matrix) state. Either form may be unnormalised.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Pure(CVector),
    Mixed(CMatrix),
}

impl State {
    pub fn dim(&self) -> usize {
        match self {
            State::Pure(v) => v.len(),
            State::Mixed(r) => r.nrows(),
        }
    }

    /// `‖ψ‖²` for kets, `Tr ρ` for densities.
    pub fn trace(&self) -> f64 {
        match self {
            State::Pure(v) => v.norm_squared(),
            State::Mixed(r) => trace(r).re,
        }
    }

    pub fn is_normalized(&self) -> bool {
        (self.trace() - 1.0).abs() < 1e-9
    }

    pub fn is_pure(&self) -> bool {
        matches!(self, State::Pure(_))
    }

    pub fn density(&self) -> CMatrix {
        match self {
            State::Pure(v) => outer(v),
            State::Mixed(r) => r.clone(),
        }
    }

    pub fn to_mixed(&self) -> State {
        State::Mixed(self.density())
    }

    pub fn normalized(&self) -> Result<State> {
        let t = self.trace();
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::ZeroNorm("normalisation"));
        }
        Ok(match self {
            State::Pure(v) => State::Pure(v / C64::from(t.sqrt())),
            State::Mixed(r) => State::Mixed(r / C64::from(t)),
        })
    }

    /// Checks the density-form invariants: Hermitian within 1e-10 and trace in (0, 1 + 1e-9].
    pub fn validate(&self) -> Result<()> {
        if let State::Mixed(r) = self {
            let defect = hermiticity_defect(r);
            if defect > 1e-10 {
                return Err(Error::NotHermitian(defect));
            }
        }
        let t = self.trace();
        if !(t > 0.0 && t <= 1.0 + 1e-9) {
            return Err(Error::InvalidArgument(format!("state trace {t} outside (0, 1]")));
        }
        Ok(())
    }

    /// Tensor product of two single-mode states in cavity-major order.
    pub fn product(cavity: &State, mech: &State) -> State {
        match (cavity, mech) {
            (State::Pure(a), State::Pure(b)) => State::Pure(a.kronecker(b)),
            _ => State::Mixed(cavity.density().kronecker(&mech.density())),
        }
    }

    /// `|⟨ψ|φ⟩|` for kets, `|Tr(ρσ)|` otherwise.
    pub fn overlap(&self, other: &State) -> f64 {
        match (self, other) {
            (State::Pure(a), State::Pure(b)) => a.dotc(b).norm(),
            _ => trace(&(self.density() * other.density())).norm(),
        }
    }
}

pub fn ladder_operator(dim: usize, kind: LadderKind) -> Result<Operator> {
    if dim < 2 {
        return Err(Error::InvalidSpace(format!("mode dimension {dim} < 2")));
    }
    let mut m = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        let amp = c((n as f64).sqrt(), 0.0);
        match kind {
            LadderKind::Annihilation => m[(n - 1, n)] = amp,
            LadderKind::Creation => m[(n, n - 1)] = amp,
            LadderKind::Number => {}
        }
    }
    if kind == LadderKind::Number {
        for n in 0..dim {
            m[(n, n)] = c(n as f64, 0.0);
        }
    }
    Ok(Operator { matrix: m, space: SpaceTag::Mode(dim) })
}

/// Lifts a single-mode operator to the joint space: `op ⊗ 1` or `1 ⊗ op`.
pub fn embed(op: &Operator, which: Mode, space: FockSpace) -> Result<Operator> {
    let want = space.mode_dim(which);
    if op.space != SpaceTag::Mode(want) {
        return Err(Error::DimensionMismatch { expected: want, got: op.dim() });
    }
    let matrix = match which {
        Mode::Cavity => op.matrix.kronecker(&CMatrix::identity(space.dim_mech, space.dim_mech)),
        Mode::Mech => CMatrix::identity(space.dim_cavity, space.dim_cavity).kronecker(&op.matrix),
    };
    Ok(Operator { matrix, space: SpaceTag::Joint(space) })
}

/// The joint-space operators used everywhere: `a`, `b` and their number operators.
#[derive(Debug, Clone)]
pub struct ModeOperators {
    pub space: FockSpace,
    pub a: Operator,
    pub b: Operator,
    pub n_cav: Operator,
    pub n_mech: Operator,
}

impl ModeOperators {
    pub fn new(space: FockSpace) -> Result<Self> {
        let a = embed(&ladder_operator(space.dim_cavity, LadderKind::Annihilation)?, Mode::Cavity, space)?;
        let b = embed(&ladder_operator(space.dim_mech, LadderKind::Annihilation)?, Mode::Mech, space)?;
        let n_cav = embed(&ladder_operator(space.dim_cavity, LadderKind::Number)?, Mode::Cavity, space)?;
        let n_mech = embed(&ladder_operator(space.dim_mech, LadderKind::Number)?, Mode::Mech, space)?;
        Ok(Self { space, a, b, n_cav, n_mech })
    }
}

/// Coherent state `|α⟩` truncated to `dim` levels and renormalised.
///
/// The flag is raised when `|α|² > dim / 2`, where truncation visibly distorts the state.
pub fn coherent_state(alpha: C64, dim: usize) -> (State, bool) {
    let mut v = CVector::zeros(dim);
    let mut term = C64::from((-alpha.norm_sqr() / 2.0).exp());
    for n in 0..dim {
        v[n] = term;
        term = term * alpha / C64::from(((n + 1) as f64).sqrt());
    }
    let norm = v.norm();
    v /= C64::from(norm);
    (State::Pure(v), alpha.norm_sqr() > dim as f64 / 2.0)
}

/// Thermal state with mean occupation `mbar`, renormalised over the truncated space.
pub fn thermal_state(mbar: f64, dim: usize) -> Result<State> {
    if !(mbar >= 0.0) {
        return Err(Error::InvalidArgument(format!("mean occupation must be non-negative, got {mbar}")));
    }
    let ratio = mbar / (mbar + 1.0);
    let weights: Vec<f64> = (0..dim).map(|m| ratio.powi(m as i32)).collect();
    let total: f64 = weights.iter().sum();
    let diag = CVector::from_iterator(dim, weights.iter().map(|w| c(w / total, 0.0)));
    Ok(State::Mixed(CMatrix::from_diagonal(&diag)))
}

/// `D(β) = exp(β b† − β* b)` on a `dim`-level mode.
pub fn displacement_operator(beta: C64, dim: usize) -> Result<Operator> {
    let b = ladder_operator(dim, LadderKind::Annihilation)?;
    let gen = b.matrix.adjoint() * beta - &b.matrix * beta.conj();
    Ok(Operator { matrix: crate::linalg::expm(&gen), space: SpaceTag::Mode(dim) })
}

fn check_joint(state: &State, space: FockSpace) -> Result<()> {
    if state.dim() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: state.dim() });
    }
    Ok(())
}

/// Reduced density on the kept mode.
pub fn partial_trace(state: &State, keep: Mode, space: FockSpace) -> Result<State> {
    check_joint(state, space)?;
    let (nc, nm) = (space.dim_cavity, space.dim_mech);
    let reduced = match state {
        State::Pure(v) => match keep {
            Mode::Cavity => CMatrix::from_fn(nc, nc, |i, j| {
                (0..nm).fold(ZERO, |acc, m| acc + v[i * nm + m] * v[j * nm + m].conj())
            }),
            Mode::Mech => CMatrix::from_fn(nm, nm, |k, l| {
                (0..nc).fold(ZERO, |acc, ci| acc + v[ci * nm + k] * v[ci * nm + l].conj())
            }),
        },
        State::Mixed(r) => match keep {
            Mode::Cavity => CMatrix::from_fn(nc, nc, |i, j| {
                (0..nm).fold(ZERO, |acc, m| acc + r[(i * nm + m, j * nm + m)])
            }),
            Mode::Mech => CMatrix::from_fn(nm, nm, |k, l| {
                (0..nc).fold(ZERO, |acc, ci| acc + r[(ci * nm + k, ci * nm + l)])
            }),
        },
    };
    Ok(State::Mixed(reduced))
}

/// Partial transpose over the mechanical index:
/// `(i_c i_m; j_c j_m) ↦ (i_c j_m; j_c i_m)`.
pub fn partial_transpose_mech(state: &State, space: FockSpace) -> Result<Operator> {
    check_joint(state, space)?;
    let r = state.density();
    let nm = space.dim_mech;
    let d = space.dim();
    let out = CMatrix::from_fn(d, d, |row, col| {
        let (ic, im) = (row / nm, row % nm);
        let (jc, jm) = (col / nm, col % nm);
        r[(ic * nm + jm, jc * nm + im)]
    });
    Ok(Operator { matrix: out, space: SpaceTag::Joint(space) })
}

/// Populations of the top cavity level and the top mechanical level.
pub fn truncation_leakage(state: &State, space: FockSpace) -> Result<(f64, f64)> {
    check_joint(state, space)?;
    let (nc, nm) = (space.dim_cavity, space.dim_mech);
    let pop = |idx: usize| match state {
        State::Pure(v) => v[idx].norm_sqr(),
        State::Mixed(r) => r[(idx, idx)].re,
    };
    let norm = state.trace();
    let top_cav: f64 = (0..nm).map(|m| pop(space.index(nc - 1, m))).sum();
    let top_mech: f64 = (0..nc).map(|ci| pop(space.index(ci, nm - 1))).sum();
    Ok((top_cav / norm, top_mech / norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigenvalues, max_abs_diff};

    fn bell(space: FockSpace) -> State {
        let mut v = CVector::zeros(space.dim());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        v[space.index(0, 0)] = c(s, 0.0);
        v[space.index(1, 1)] = c(s, 0.0);
        State::Pure(v)
    }

    #[test]
    fn annihilation_lowers_one_photon_to_vacuum() {
        let a = ladder_operator(4, LadderKind::Annihilation).unwrap();
        let mut one = CVector::zeros(4);
        one[1] = c(1.0, 0.0);
        let out = &a.matrix * one;
        assert_eq!(out[0], c(1.0, 0.0));
        assert!(out.iter().skip(1).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn number_operator_is_diagonal_count() {
        let n = ladder_operator(4, LadderKind::Number).unwrap();
        for k in 0..4 {
            assert_eq!(n.matrix[(k, k)], c(k as f64, 0.0));
        }
        let a = ladder_operator(4, LadderKind::Annihilation).unwrap();
        let ad = ladder_operator(4, LadderKind::Creation).unwrap();
        assert_eq!(ad.matrix, a.matrix.adjoint());
        // √n·√n rounds to n within one ulp
        assert!(max_abs_diff(&(&ad * &a).matrix, &n.matrix) < 1e-15 * 4.0);
    }

    #[test]
    fn commutator_is_identity_except_top_level() {
        let dim = 5;
        let a = ladder_operator(dim, LadderKind::Annihilation).unwrap().matrix;
        let comm = &a * a.adjoint() - a.adjoint() * &a;
        for i in 0..dim {
            for j in 0..dim {
                let want = match (i == j, i == dim - 1) {
                    (true, false) => 1.0,
                    (true, true) => -((dim - 1) as f64),
                    _ => 0.0,
                };
                assert!((comm[(i, j)] - c(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn tiny_modes_are_rejected() {
        assert!(matches!(ladder_operator(1, LadderKind::Number), Err(Error::InvalidSpace(_))));
        assert!(FockSpace::new(1, 4).is_err());
    }

    #[test]
    fn embed_identity_and_number() {
        let space = FockSpace::new(3, 6).unwrap();
        let id = embed(&Operator::identity(SpaceTag::Mode(6)), Mode::Mech, space).unwrap();
        assert_eq!(id.matrix, CMatrix::identity(18, 18));
        let nc = embed(&ladder_operator(3, LadderKind::Number).unwrap(), Mode::Cavity, space).unwrap();
        let psi = space.basis(2, 5);
        let out = nc.apply(&psi).unwrap();
        if let (State::Pure(o), State::Pure(p)) = (out, psi) {
            assert_eq!(o, p * c(2.0, 0.0));
        }
        let wrong = ladder_operator(4, LadderKind::Number).unwrap();
        assert!(embed(&wrong, Mode::Cavity, space).is_err());
    }

    #[test]
    fn cross_mode_operators_commute() {
        let ops = ModeOperators::new(FockSpace::new(4, 5).unwrap()).unwrap();
        let ab = &ops.a * &ops.b;
        let ba = &ops.b * &ops.a;
        assert!(max_abs_diff(&ab.matrix, &ba.matrix) < 1e-15);
    }

    #[test]
    fn coherent_state_moments() {
        let (vac, warn) = coherent_state(C64::from(0.0), 8);
        assert!(!warn);
        let mut want = CVector::zeros(8);
        want[0] = c(1.0, 0.0);
        assert_eq!(vac, State::Pure(want));
        let (s, warn) = coherent_state(C64::from(1.0), 16);
        assert!(!warn);
        let n = ladder_operator(16, LadderKind::Number).unwrap();
        assert!((n.expectation(&s).re - 1.0).abs() < 1e-6);
        assert!((s.overlap(&s) - 1.0).abs() < 1e-12);
        let (_, warn) = coherent_state(C64::from(3.0), 16);
        assert!(warn);
    }

    #[test]
    fn thermal_state_is_geometric() {
        let vac = thermal_state(0.0, 5).unwrap();
        assert!((vac.density()[(0, 0)].re - 1.0).abs() < 1e-15);
        let th = thermal_state(1.0, 20).unwrap();
        assert!((th.trace() - 1.0).abs() < 1e-9);
        for m in 0..20 {
            assert!((th.density()[(m, m)].re - 0.5f64.powi(m as i32 + 1)).abs() < 1e-6);
        }
        let n = ladder_operator(20, LadderKind::Number).unwrap();
        assert!((n.expectation(&th).re - 1.0).abs() < 1e-4);
        assert!(thermal_state(-0.1, 5).is_err());
    }

    #[test]
    fn displacement_of_vacuum_is_coherent() {
        let dim = 30;
        let id = displacement_operator(C64::from(0.0), dim).unwrap();
        assert!(max_abs_diff(&id.matrix, &CMatrix::identity(dim, dim)) < 1e-15);
        let beta = c(1.2, -0.7);
        let d = displacement_operator(beta, dim).unwrap();
        let mut vac = CVector::zeros(dim);
        vac[0] = c(1.0, 0.0);
        let displaced = &d.matrix * vac;
        let (coh, _) = coherent_state(beta, dim);
        if let State::Pure(want) = coh {
            assert!((displaced - want).camax() < 1e-8);
        }
        // Unitarity holds on the lower half of the truncated space.
        let dd = d.matrix.adjoint() * &d.matrix;
        for i in 0..dim / 2 {
            for j in 0..dim / 2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dd[(i, j)] - c(want, 0.0)).norm() < 1e-8, "({i},{j})");
            }
        }
    }

    #[test]
    fn partial_trace_of_bell_and_product() {
        let space = FockSpace::new(3, 4).unwrap();
        let rho_c = partial_trace(&bell(space), Mode::Cavity, space).unwrap().density();
        assert!((rho_c[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((rho_c[(1, 1)].re - 0.5).abs() < 1e-15);
        assert!(rho_c[(0, 1)].norm() < 1e-15);

        let (coh, _) = coherent_state(c(0.3, 0.2), 3);
        let th = thermal_state(0.5, 4).unwrap();
        let prod = State::product(&coh, &th);
        let back = partial_trace(&prod, Mode::Cavity, space).unwrap();
        assert!(max_abs_diff(&back.density(), &coh.density()) < 1e-15);
        assert!((back.trace() - prod.trace()).abs() < 1e-12);
        let mech = partial_trace(&prod, Mode::Mech, space).unwrap();
        assert!(max_abs_diff(&mech.density(), &th.density()) < 1e-15);
    }

    #[test]
    fn partial_transpose_properties() {
        let space = FockSpace::new(2, 3).unwrap();
        let b = bell(space).to_mixed();
        let pt = partial_transpose_mech(&b, space).unwrap();
        let twice = partial_transpose_mech(&State::Mixed(pt.matrix.clone()), space).unwrap();
        assert_eq!(twice.matrix, b.density());
        let ev = hermitian_eigenvalues(&pt.matrix);
        let nonzero: Vec<f64> = ev.into_iter().filter(|v| v.abs() > 1e-12).collect();
        assert_eq!(nonzero.len(), 4);
        assert!((nonzero[0] + 0.5).abs() < 1e-12);
        assert!(nonzero[1..].iter().all(|v| (v - 0.5).abs() < 1e-12));

        let (coh, _) = coherent_state(c(0.4, 0.0), 2);
        let prod = State::product(&coh, &thermal_state(0.7, 3).unwrap());
        let pt = partial_transpose_mech(&prod, space).unwrap();
        assert!(hermitian_eigenvalues(&pt.matrix)[0] >= -1e-12);
    }

    #[test]
    fn leakage_of_edge_states() {
        let space = FockSpace::new(4, 6).unwrap();
        assert_eq!(truncation_leakage(&space.basis(0, 0), space).unwrap(), (0.0, 0.0));
        assert_eq!(truncation_leakage(&space.basis(3, 0), space).unwrap(), (1.0, 0.0));
    }
}
