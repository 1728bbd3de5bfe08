//! System parameters and Hamiltonians of the driven optomechanical cavity.
//!
//! All quantities use ħ = 1. Presets express rates in units of the total
//! cavity decay κ = κ_d + κ_l = 1.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fock::{displacement_operator, embed, FockSpace, Mode, ModeOperators, Operator, SpaceTag};
use crate::linalg::{c, C64, I};

/// Physical parameters. Frequencies in rad/s, rates in 1/s (or units of κ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Laser detuning Δ = ω_L − ω_0.
    pub delta: f64,
    pub omega_m: f64,
    pub g: f64,
    /// Rabi frequency Ω; accepts a plain number or `[re, im]`.
    #[serde(serialize_with = "ser_complex", deserialize_with = "de_complex")]
    pub omega_drive: C64,
    pub kappa_d: f64,
    pub kappa_l: f64,
    pub gamma: f64,
    pub mbar: f64,
}

fn ser_complex<S: Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if z.im == 0.0 {
        s.serialize_f64(z.re)
    } else {
        [z.re, z.im].serialize(s)
    }
}

fn de_complex<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<C64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Real(f64),
        Pair([f64; 2]),
    }
    Ok(match Repr::deserialize(d)? {
        Repr::Real(re) => c(re, 0.0),
        Repr::Pair([re, im]) => c(re, im),
    })
}

/// Detuning regime `n`: Δ = −n g²/ω_M favours the |0⟩ → |n⟩ cavity transition.
/// 0 is on-resonance driving, 1 the photon blockade, 2 the two-photon cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetuningRegime(pub u32);

impl DetuningRegime {
    pub const ON_RESONANCE: Self = Self(0);
    pub const BLOCKADE: Self = Self(1);
    pub const CASCADE: Self = Self(2);
}

impl fmt::Display for DetuningRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={}", self.0)
    }
}

/// Parameters that can be swept or inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    G,
    OmegaM,
    Delta,
    KappaD,
    KappaL,
    Gamma,
    Mbar,
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Parameter::G => "g",
            Parameter::OmegaM => "omega_m",
            Parameter::Delta => "delta",
            Parameter::KappaD => "kappa_d",
            Parameter::KappaL => "kappa_l",
            Parameter::Gamma => "gamma",
            Parameter::Mbar => "mbar",
        };
        f.write_str(name)
    }
}

impl SystemParams {
    /// Rates of the strongly nonlinear sensing setup (κ = 1):
    /// g = 4, ω_M = 4√2, κ_d = 0.9, κ_l = 0.1, γ = 10⁻³ ω_M, m̄ = 1, Ω = 0.3 ω_M,
    /// with the detuning chosen for `regime`.
    pub fn sensing_preset(regime: DetuningRegime) -> Self {
        let g = 4.0;
        let omega_m = 4.0 * std::f64::consts::SQRT_2;
        Self {
            delta: detuning_for_regime(regime, g, omega_m),
            omega_m,
            g,
            omega_drive: c(0.3 * omega_m, 0.0),
            kappa_d: 0.9,
            kappa_l: 0.1,
            gamma: 1e-3 * omega_m,
            mbar: 1.0,
        }
    }

    /// Near-linear, strongly driven setup: Δ = 0, Ω = g = ω_M = γ = κ, κ_d = 0.9κ, m̄ = 1.
    pub fn near_linear_preset() -> Self {
        Self {
            delta: 0.0,
            omega_m: 1.0,
            g: 1.0,
            omega_drive: c(1.0, 0.0),
            kappa_d: 0.9,
            kappa_l: 0.1,
            gamma: 1.0,
            mbar: 1.0,
        }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa_d + self.kappa_l
    }

    pub fn get(&self, p: Parameter) -> f64 {
        match p {
            Parameter::G => self.g,
            Parameter::OmegaM => self.omega_m,
            Parameter::Delta => self.delta,
            Parameter::KappaD => self.kappa_d,
            Parameter::KappaL => self.kappa_l,
            Parameter::Gamma => self.gamma,
            Parameter::Mbar => self.mbar,
        }
    }

    pub fn with(mut self, p: Parameter, value: f64) -> Self {
        match p {
            Parameter::G => self.g = value,
            Parameter::OmegaM => self.omega_m = value,
            Parameter::Delta => self.delta = value,
            Parameter::KappaD => self.kappa_d = value,
            Parameter::KappaL => self.kappa_l = value,
            Parameter::Gamma => self.gamma = value,
            Parameter::Mbar => self.mbar = value,
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("delta", self.delta),
            ("omega_m", self.omega_m),
            ("g", self.g),
            ("kappa_d", self.kappa_d),
            ("kappa_l", self.kappa_l),
            ("gamma", self.gamma),
            ("mbar", self.mbar),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite")));
            }
        }
        if !(self.omega_drive.re.is_finite() && self.omega_drive.im.is_finite()) {
            return Err(Error::InvalidArgument("omega_drive must be finite".into()));
        }
        if self.omega_m <= 0.0 {
            return Err(Error::InvalidArgument("omega_m must be positive".into()));
        }
        for (name, v) in [("g", self.g), ("kappa_d", self.kappa_d), ("kappa_l", self.kappa_l), ("gamma", self.gamma), ("mbar", self.mbar)] {
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Validates and additionally requires κ > 0, as open dynamics does.
    pub fn validate_open(&self) -> Result<()> {
        self.validate()?;
        if self.kappa() <= 0.0 {
            return Err(Error::InvalidArgument("kappa_d + kappa_l must be positive".into()));
        }
        Ok(())
    }

    /// Stable 64-bit FNV-1a digest over the IEEE bit patterns of every field.
    pub fn fingerprint(&self) -> String {
        let words = [
            self.delta,
            self.omega_m,
            self.g,
            self.omega_drive.re,
            self.omega_drive.im,
            self.kappa_d,
            self.kappa_l,
            self.gamma,
            self.mbar,
        ];
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for w in words {
            for byte in w.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

/// Rotating-frame Hamiltonian
/// `−Δ a†a + ω_M b†b + g a†a (b + b†) + ½(Ω a + Ω* a†)`.
pub fn hamiltonian_rf(params: &SystemParams, space: FockSpace) -> Result<Operator> {
    let ops = ModeOperators::new(space)?;
    Ok(hamiltonian_rf_with(params, &ops))
}

pub(crate) fn hamiltonian_rf_with(params: &SystemParams, ops: &ModeOperators) -> Operator {
    let a = &ops.a.matrix;
    let b = &ops.b.matrix;
    let n = &ops.n_cav.matrix;
    let x = b + b.adjoint();
    let omega = params.omega_drive;
    let mut h = n * c(-params.delta, 0.0)
        + &ops.n_mech.matrix * c(params.omega_m, 0.0)
        + (n * x) * c(params.g, 0.0)
        + a * (omega * 0.5)
        + a.adjoint() * (omega.conj() * 0.5);
    crate::linalg::symmetrize(&mut h);
    Operator { matrix: h, space: SpaceTag::Joint(ops.space) }
}

/// Polaron-frame Hamiltonian
/// `−Δ a†a + ω_M b†b − (g²/ω_M)(a†a)² + ½(Ω a D + h.c.)` with `D = exp((g/ω_M)(b† − b))`.
pub fn hamiltonian_polaron(params: &SystemParams, space: FockSpace) -> Result<Operator> {
    let ops = ModeOperators::new(space)?;
    let d = displacement_operator(c(params.g / params.omega_m, 0.0), space.dim_mech)?;
    let d = embed(&d, Mode::Mech, space)?.matrix;
    let n = &ops.n_cav.matrix;
    let kerr = params.g * params.g / params.omega_m;
    let drive = &ops.a.matrix * d * (params.omega_drive * 0.5);
    let mut h = n * c(-params.delta, 0.0) + &ops.n_mech.matrix * c(params.omega_m, 0.0) - (n * n) * c(kerr, 0.0)
        + &drive
        + drive.adjoint();
    crate::linalg::symmetrize(&mut h);
    Ok(Operator { matrix: h, space: SpaceTag::Joint(space) })
}

/// Polaron-frame energy `−Δ n_cav + ω_M n_mech − (g²/ω_M) n_cav²`.
pub fn energy_level(n_cav: u32, n_mech: u32, params: &SystemParams) -> f64 {
    let nc = n_cav as f64;
    -params.delta * nc + params.omega_m * n_mech as f64 - params.g * params.g / params.omega_m * nc * nc
}

pub fn detuning_for_regime(regime: DetuningRegime, g: f64, omega_m: f64) -> f64 {
    -(regime.0 as f64) * g * g / omega_m
}

/// `(g/κ, g²/(ω_M κ), both exceed 1)`.
pub fn nonlinearity_check(params: &SystemParams) -> (f64, f64, bool) {
    let kappa = params.kappa();
    let r1 = params.g / kappa;
    let r2 = params.g * params.g / (params.omega_m * kappa);
    (r1, r2, r1 > 1.0 && r2 > 1.0)
}

/// `H_RF − i(κ_d/2) a†a`, the generator of the closed no-photon evolution.
pub fn h_no_photon(params: &SystemParams, space: FockSpace) -> Result<Operator> {
    let ops = ModeOperators::new(space)?;
    let mut h = hamiltonian_rf_with(params, &ops);
    h.matrix -= &ops.n_cav.matrix * (I * (params.kappa_d / 2.0));
    Ok(h)
}
