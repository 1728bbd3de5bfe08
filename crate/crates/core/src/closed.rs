//! Undriven closed and no-photon evolution in closed form, the analytic purity
//! series, and the linear entropy of the cavity.
//!
//! Time is dimensionless, `t′ = ω_M t`, with `k = g/ω_M` and `r = −Δ/ω_M`; the
//! no-photon variant uses the complex `r̃ = −(Δ + iκ_d/2)/ω_M`.

use crate::error::{Error, Result};
use crate::fock::{displacement_operator, partial_trace, FockSpace, Mode, State};
use crate::linalg::{c, trace, CVector, C64, I};

/// Applies `U(t′)` for `Ω = 0` block by block in the cavity number `n`:
/// `e^{−i r n t′} e^{i k² n² (t′ − sin t′)} D(−k n η) e^{−i b†b t′}` with `η = 1 − e^{−i t′}`.
///
/// A complex `r` with negative imaginary part gives the no-photon evolution; the output
/// is then unnormalised and its squared norm is the probability of no detection.
pub fn evolve_closed(initial: &State, t_prime: f64, k: f64, r: C64, space: FockSpace) -> Result<State> {
    let State::Pure(psi) = initial else {
        return Err(Error::NotPure);
    };
    if psi.len() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: psi.len() });
    }
    let nm = space.dim_mech;
    let eta = C64::from(1.0) - (-I * t_prime).exp();
    let rotation: Vec<C64> = (0..nm).map(|m| (-I * (m as f64 * t_prime)).exp()).collect();
    let mut out = CVector::zeros(space.dim());
    for n in 0..space.dim_cavity {
        let nf = n as f64;
        let block = psi.rows(n * nm, nm);
        if block.iter().all(|z| *z == C64::from(0.0)) {
            continue;
        }
        let rotated = CVector::from_iterator(nm, block.iter().zip(&rotation).map(|(z, p)| z * p));
        let displaced = if n == 0 || k == 0.0 {
            rotated
        } else {
            &displacement_operator(-eta * (k * nf), nm)?.matrix * rotated
        };
        let phase = (-I * r * (nf * t_prime)).exp() * (I * (k * k * nf * nf * (t_prime - t_prime.sin()))).exp();
        out.rows_mut(n * nm, nm).copy_from(&(displaced * phase));
    }
    Ok(State::Pure(out))
}

/// `|ψ⟩ → a|ψ⟩/‖a|ψ⟩‖`.
pub fn apply_cavity_jump_pure(state: &State, space: FockSpace) -> Result<State> {
    let State::Pure(psi) = state else {
        return Err(Error::NotPure);
    };
    if psi.len() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: psi.len() });
    }
    let nm = space.dim_mech;
    let mut out = CVector::zeros(space.dim());
    for n in 1..space.dim_cavity {
        let amp = (n as f64).sqrt();
        for m in 0..nm {
            out[(n - 1) * nm + m] = psi[n * nm + m] * amp;
        }
    }
    let norm = out.norm();
    if !(norm > 1e-300) {
        return Err(Error::ZeroNorm("cavity jump"));
    }
    Ok(State::Pure(out / C64::from(norm)))
}

/// `1 − Tr ρ_cav²` of the normalised reduced cavity state.
pub fn linear_entropy(state: &State, space: FockSpace) -> Result<f64> {
    let reduced = partial_trace(&state.normalized()?, Mode::Cavity, space)?.density();
    Ok(1.0 - trace(&(&reduced * &reduced)).re)
}

/// Default number of cavity terms for the purity series: `max(20, ⌈|α̃|² + 8|α̃|⌉)`.
pub fn default_series_cutoff(alpha_tilde_abs: f64) -> usize {
    20usize.max((alpha_tilde_abs * alpha_tilde_abs + 8.0 * alpha_tilde_abs).ceil() as usize)
}

/// Closed-form purity of the reduced cavity state after evolving `|α⟩|β⟩` for `t′`:
///
/// `P = e^{−2|α̃|²} Σ_{n,n′} |α̃|^{2(n+n′)}/(n! n′!) · e^{−|φ_n|² − |φ_n′|² + 2 Re(φ_n φ_n′*)}`
/// with `φ_n = β e^{−it′} + k n η` and `α̃ = α e^{−i r̃ t′}`.
///
/// `series_cutoff` bounds both sums; `None` picks [`default_series_cutoff`]. The Poisson
/// tail beyond the cutoff must be below 1e-10.
pub fn analytic_purity(
    alpha: C64,
    beta: C64,
    k: f64,
    r_tilde: C64,
    t_prime: f64,
    series_cutoff: Option<usize>,
) -> Result<f64> {
    let alpha_t = alpha * (-I * r_tilde * t_prime).exp();
    let x = alpha_t.norm_sqr();
    let terms = series_cutoff.unwrap_or_else(|| default_series_cutoff(x.sqrt()));
    // Normalised Poisson weights e^{−x} xⁿ/n!, built in log space.
    let weights: Vec<f64> = (0..terms)
        .scan(-x, |log_w, n| {
            if n > 0 {
                *log_w += x.ln() - (n as f64).ln();
            }
            Some(if x == 0.0 && n > 0 { 0.0 } else { log_w.exp() })
        })
        .collect();
    let tail = (1.0 - weights.iter().sum::<f64>()).max(0.0);
    if tail > 1e-10 {
        return Err(Error::ConvergenceNotReached { terms, tail });
    }
    let eta = C64::from(1.0) - (-I * t_prime).exp();
    let phi: Vec<C64> = (0..terms).map(|n| beta * (-I * t_prime).exp() + eta * (k * n as f64)).collect();
    let mut purity = 0.0;
    for n in 0..terms {
        if weights[n] == 0.0 {
            continue;
        }
        for m in 0..terms {
            let exponent = -phi[n].norm_sqr() - phi[m].norm_sqr() + 2.0 * (phi[n] * phi[m].conj()).re;
            purity += weights[n] * weights[m] * exponent.exp();
        }
    }
    Ok(purity)
}

/// `|α⟩_cav ⊗ |β⟩_mech`.
pub fn coherent_product(alpha: C64, beta: C64, space: FockSpace) -> State {
    let (cav, _) = crate::fock::coherent_state(alpha, space.dim_cavity);
    let (mech, _) = crate::fock::coherent_state(beta, space.dim_mech);
    State::product(&cav, &mech)
}

/// `r̃ = −(Δ + iκ_d/2)/ω_M`.
pub fn no_photon_rate(delta: f64, kappa_d: f64, omega_m: f64) -> C64 {
    -c(delta, kappa_d / 2.0) / omega_m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expm;
    use crate::model::{h_no_photon, SystemParams};
    use std::f64::consts::PI;

    fn undriven_params(kappa_d: f64) -> SystemParams {
        SystemParams {
            delta: 0.0,
            omega_m: 1.0,
            g: 1.0,
            omega_drive: c(0.0, 0.0),
            kappa_d,
            kappa_l: 0.0,
            gamma: 0.0,
            mbar: 0.0,
        }
    }

    #[test]
    fn blockwise_evolution_matches_dense_exponential() {
        // Oracle: exp(−i H_no-ph t) on the joint space with ω_M = 1 so that t′ = t.
        let space = FockSpace::new(5, 45).unwrap();
        let p = SystemParams { delta: -0.37, g: 0.4, ..undriven_params(0.2) };
        let psi = coherent_product(c(0.6, 0.2), c(-0.3, 0.5), space);
        let h = h_no_photon(&p, space).unwrap().matrix;
        for &t in &[0.4, 1.7, 4.0] {
            let u = expm(&(&h * (-I * t)));
            let State::Pure(v) = &psi else { unreachable!() };
            let want = &u * v;
            let got = evolve_closed(&psi, t, p.g / p.omega_m, no_photon_rate(p.delta, p.kappa_d, p.omega_m), space)
                .unwrap();
            let State::Pure(got) = got else { unreachable!() };
            let err = (got - want).camax(); assert!(err < 1e-9, "t {t} err {err}");
        }
    }

    #[test]
    fn full_period_returns_to_initial_state() {
        let space = FockSpace::new(12, 40).unwrap();
        let psi = coherent_product(c(1.0, 0.0), c(1.0, 0.0), space);
        let out = evolve_closed(&psi, 2.0 * PI, 1.0, c(0.0, 0.0), space).unwrap();
        assert!(out.overlap(&psi) > 1.0 - 1e-8);
        assert!(linear_entropy(&out, space).unwrap() < 1e-10);
    }

    #[test]
    fn decoupled_modes_never_entangle() {
        let space = FockSpace::new(8, 8).unwrap();
        let psi = coherent_product(c(0.8, 0.1), c(0.2, -0.4), space);
        for k in 0..10 {
            let out = evolve_closed(&psi, 0.7 * k as f64, 0.0, c(0.3, -0.02), space).unwrap();
            assert!(linear_entropy(&out, space).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn no_photon_norm_of_damped_coherent_state() {
        let space = FockSpace::new(16, 4).unwrap();
        let (kappa_d, omega_m) = (0.3, 1.5);
        let alpha = c(1.1, -0.4);
        let psi = coherent_product(alpha, c(0.0, 0.0), space);
        let r = no_photon_rate(0.2, kappa_d, omega_m);
        let mut last = 1.0;
        for step in 1..=20 {
            let t = 0.5 * step as f64;
            let norm = evolve_closed(&psi, t, 0.0, r, space).unwrap().trace();
            let want = (-alpha.norm_sqr() * (1.0 - (-kappa_d * t / omega_m).exp())).exp();
            assert!((norm - want).abs() < 1e-8, "t′ = {t}: {norm} vs {want}");
            assert!(norm <= last);
            last = norm;
        }
    }

    #[test]
    fn norm_decreases_with_coupling_too() {
        let space = FockSpace::new(10, 30).unwrap();
        let psi = coherent_product(c(0.9, 0.0), c(0.5, 0.0), space);
        let r = no_photon_rate(-0.5, 0.1, 1.0);
        let mut last = 1.0;
        for step in 1..=40 {
            let norm = evolve_closed(&psi, 0.25 * step as f64, 0.5, r, space).unwrap().trace();
            assert!(norm <= last + 1e-14);
            last = norm;
        }
    }

    #[test]
    fn cavity_jump_on_simple_states() {
        let space = FockSpace::new(20, 6).unwrap();
        let (mech, _) = crate::fock::coherent_state(c(0.3, 0.1), 6);
        let one = State::product(&space_basis(20, 1), &mech);
        let out = apply_cavity_jump_pure(&one, space).unwrap();
        assert!(out.overlap(&State::product(&space_basis(20, 0), &mech)) > 1.0 - 1e-14);

        let coh = coherent_product(c(0.7, -0.2), c(0.3, 0.1), space);
        let out = apply_cavity_jump_pure(&coh, space).unwrap();
        assert!(out.overlap(&coh) > 1.0 - 1e-9);

        assert!(matches!(apply_cavity_jump_pure(&space.basis(0, 0), space), Err(Error::ZeroNorm(_))));
        assert!(matches!(apply_cavity_jump_pure(&coh.to_mixed(), space), Err(Error::NotPure)));
    }

    fn space_basis(dim: usize, n: usize) -> State {
        let mut v = CVector::zeros(dim);
        v[n] = c(1.0, 0.0);
        State::Pure(v)
    }

    #[test]
    fn linear_entropy_reference_values() {
        let space = FockSpace::new(4, 4).unwrap();
        let mut v = CVector::zeros(16);
        v[space.index(0, 0)] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        v[space.index(1, 1)] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        assert!((linear_entropy(&State::Pure(v), space).unwrap() - 0.5).abs() < 1e-14);

        let mut w = CVector::zeros(16);
        for n in 0..4 {
            w[space.index(n, n)] = c(0.5, 0.0);
        }
        assert!((linear_entropy(&State::Pure(w), space).unwrap() - 0.75).abs() < 1e-14);
        assert!(linear_entropy(&coherent_product(c(0.3, 0.0), c(1.0, 0.0), space), space).unwrap().abs() < 1e-10);
    }

    #[test]
    fn analytic_purity_special_points() {
        assert!((analytic_purity(c(1.0, 0.0), c(1.0, 0.0), 0.8, c(0.3, 0.0), 0.0, None).unwrap() - 1.0).abs() < 1e-12);
        for l in 1..4 {
            let p = analytic_purity(c(1.2, 0.3), c(0.5, 0.0), 0.7, c(-0.4, 0.0), 2.0 * PI * l as f64, None).unwrap();
            assert!((p - 1.0).abs() < 1e-9);
        }
        let err = analytic_purity(c(3.0, 0.0), c(0.0, 0.0), 0.5, c(0.0, 0.0), 1.0, Some(5));
        assert!(matches!(err, Err(Error::ConvergenceNotReached { .. })));
    }

    #[test]
    fn analytic_purity_matches_evolution_mid_period() {
        // α = β = 1, g = ω_M = 1, κ_d = 0.04, t′ = π. Cavity levels above five carry
        // weight below 2e-3 and enter the purity only quadratically.
        let space = FockSpace::new(12, 160).unwrap();
        let p = undriven_params(0.04);
        let r = no_photon_rate(p.delta, p.kappa_d, p.omega_m);
        let psi = coherent_product(c(1.0, 0.0), c(1.0, 0.0), space);
        let out = evolve_closed(&psi, PI, 1.0, r, space).unwrap();
        let numeric = 1.0 - linear_entropy(&out, space).unwrap();
        let analytic = analytic_purity(c(1.0, 0.0), c(1.0, 0.0), 1.0, r, PI, None).unwrap();
        assert!((numeric - analytic).abs() < 1e-6, "{numeric} vs {analytic}");
    }

    #[test]
    fn entanglement_persists_after_a_jump() {
        let space = FockSpace::new(12, 40).unwrap();
        let k = 1.0;
        let psi = coherent_product(c(1.0, 0.0), c(1.0, 0.0), space);
        let t_jump = 0.6 * PI;
        let before = evolve_closed(&psi, t_jump, k, c(0.0, 0.0), space).unwrap();
        let after = apply_cavity_jump_pure(&before, space).unwrap();
        let mut min_s = f64::INFINITY;
        for step in 0..200 {
            let t = 4.0 * PI * step as f64 / 199.0;
            let s = linear_entropy(&evolve_closed(&after, t, k, c(0.0, 0.0), space).unwrap(), space).unwrap();
            min_s = min_s.min(s);
        }
        assert!(min_s > 1e-4, "{min_s}");
    }
}
