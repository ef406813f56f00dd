//! Entropic functionals, distance measures, and continuity bounds.
//!
//! All quantities are in bits: the binary logarithm is the crate-wide
//! convention and the base conversion happens in exactly one place
//! ([`log2`]). Eigenvalues below 1e-12 are treated as exact zeros before
//! logarithms; a clamped spectrum whose trace drifted by more than 1e-9 is
//! surfaced as an error rather than silently renormalized.

use crate::linalg::{self, CMat};
use crate::state::{QuantumState, StateForm};
use crate::{Error, Result};

const LN_2: f64 = std::f64::consts::LN_2;
const ENTROPY_TRACE_DRIFT: f64 = 1e-9;

/// The single base-2 conversion point for the crate.
#[inline]
pub fn log2(x: f64) -> f64 {
    x.ln() / LN_2
}

/// Shannon entropy of a clamped spectrum, in bits, with 0·log 0 := 0.
pub fn entropy_from_spectrum(vals: &[f64]) -> Result<f64> {
    let clamped = linalg::clamp_psd_spectrum(vals, linalg::PSD_TOL)?;
    let total: f64 = clamped.iter().sum();
    if (total - 1.0).abs() > ENTROPY_TRACE_DRIFT {
        return Err(Error::Numerical(format!(
            "spectrum trace drifted to {total} (> 1e-9 off unit)"
        )));
    }
    let mut h = 0.0;
    for &v in &clamped {
        if v > linalg::EIG_CLAMP {
            h -= v * log2(v);
        }
    }
    Ok(h)
}

/// Von Neumann entropy (bits) of the reduced state on `regs`.
///
/// For a globally pure state the complementary registers give the same
/// spectrum, so the smaller side is diagonalized.
pub fn von_neumann_entropy(s: &QuantumState, regs: &[&str]) -> Result<f64> {
    for r in regs {
        s.layout().position(r)?;
    }
    if regs.len() == s.layout().len() {
        if s.is_pure_form() {
            return Ok(0.0);
        }
        return entropy_from_spectrum(&linalg::eigh_values(&s.density()));
    }
    if s.is_pure_form() {
        let keep_dim = s.layout().dim_of_set(regs)?;
        let comp = s.layout().complement(regs)?;
        if comp.total_dim() < keep_dim {
            let side: Vec<&str> = comp.names();
            let reduced = s.partial_trace(&side)?;
            return entropy_from_spectrum(&linalg::eigh_values(&reduced.density()));
        }
    }
    let reduced = s.partial_trace(regs)?;
    entropy_from_spectrum(&linalg::eigh_values(&reduced.density()))
}

fn check_disjoint(sets: &[&[&str]]) -> Result<()> {
    for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            for a in sets[i] {
                if sets[j].contains(a) {
                    return Err(Error::Addressing(format!("register sets overlap on {a}")));
                }
            }
        }
    }
    Ok(())
}

fn union<'a>(a: &[&'a str], b: &[&'a str]) -> Vec<&'a str> {
    let mut out = a.to_vec();
    out.extend_from_slice(b);
    out
}

/// S(A|B) = S(AB) - S(B).
pub fn cond_entropy(s: &QuantumState, regs_a: &[&str], regs_b: &[&str]) -> Result<f64> {
    check_disjoint(&[regs_a, regs_b])?;
    let sab = von_neumann_entropy(s, &union(regs_a, regs_b))?;
    let sb = if regs_b.is_empty() { 0.0 } else { von_neumann_entropy(s, regs_b)? };
    Ok(sab - sb)
}

/// I(A:B) = S(A) + S(B) - S(AB).
pub fn mutual_info(s: &QuantumState, regs_a: &[&str], regs_b: &[&str]) -> Result<f64> {
    check_disjoint(&[regs_a, regs_b])?;
    let sa = von_neumann_entropy(s, regs_a)?;
    let sb = von_neumann_entropy(s, regs_b)?;
    let sab = von_neumann_entropy(s, &union(regs_a, regs_b))?;
    Ok(sa + sb - sab)
}

/// I(A:B|C) = S(AC) + S(BC) - S(ABC) - S(C). An empty conditioning set
/// reduces to the plain mutual information.
pub fn cond_mutual_info(
    s: &QuantumState,
    regs_a: &[&str],
    regs_b: &[&str],
    regs_c: &[&str],
) -> Result<f64> {
    check_disjoint(&[regs_a, regs_b, regs_c])?;
    if regs_c.is_empty() {
        return mutual_info(s, regs_a, regs_b);
    }
    let sac = von_neumann_entropy(s, &union(regs_a, regs_c))?;
    let sbc = von_neumann_entropy(s, &union(regs_b, regs_c))?;
    let sabc = von_neumann_entropy(s, &union(&union(regs_a, regs_b), regs_c))?;
    let sc = von_neumann_entropy(s, regs_c)?;
    Ok(sac + sbc - sabc - sc)
}

fn require_same_layout(a: &QuantumState, b: &QuantumState) -> Result<()> {
    if a.layout() != b.layout() {
        return Err(Error::Dimension("states live on different layouts".into()));
    }
    Ok(())
}

/// Uhlmann fidelity F(a,b) = ||√a √b||_1 (not squared). Uses the
/// pure-state shortcut √Tr(ab) when either argument is pure.
pub fn fidelity(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    require_same_layout(a, b)?;
    let f = match (a.form(), b.form()) {
        (StateForm::Pure(va), StateForm::Pure(vb)) => va.dotc(vb).norm(),
        (StateForm::Pure(va), StateForm::Mixed(rb)) => {
            let mv = rb * va;
            va.dotc(&mv).re.max(0.0).sqrt()
        }
        (StateForm::Mixed(ra), StateForm::Pure(vb)) => {
            let mv = ra * vb;
            vb.dotc(&mv).re.max(0.0).sqrt()
        }
        (StateForm::Mixed(ra), StateForm::Mixed(rb)) => {
            let sa = linalg::sqrtm_psd(ra)?;
            let m = &sa * rb * &sa;
            let vals = linalg::clamp_psd_spectrum(&linalg::eigh_values(&m), 1e-9)?;
            vals.iter().map(|v| v.sqrt()).sum()
        }
    };
    Ok(f.clamp(0.0, 1.0))
}

/// Squared fidelity; for a pure first argument this is <psi|rho|psi>.
pub fn fidelity_sq(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    let f = fidelity(a, b)?;
    Ok(f * f)
}

/// Trace distance ½||a - b||_1.
pub fn trace_distance(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    require_same_layout(a, b)?;
    let diff = a.density() - b.density();
    Ok(0.5 * linalg::trace_norm_hermitian(&diff))
}

/// Fuchs–van de Graaf band (1-F, sqrt(1-F²)) containing the trace distance.
pub fn fvdg_band(a: &QuantumState, b: &QuantumState) -> Result<(f64, f64)> {
    let f = fidelity(a, b)?;
    Ok((1.0 - f, (1.0 - f * f).max(0.0).sqrt()))
}

/// g(δ) = (1+δ)log(1+δ) - δ log δ, continuous at 0 with g(0)=0.
pub fn g_func(delta: f64) -> Result<f64> {
    if delta < 0.0 {
        return Err(Error::InvalidArgument(format!("g needs delta >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + delta) * log2(1.0 + delta) - delta * log2(delta))
}

/// Alicki–Fannes–Winter continuity bound for the conditional entropy:
/// |S(U|V)_ρ - S(U|V)_σ| ≤ 2δ log|U| + g(δ) for ½||ρ-σ||₁ ≤ δ.
pub fn afw_bound(delta: f64, dim_u: usize) -> Result<f64> {
    if delta < 0.0 {
        return Err(Error::InvalidArgument(format!("delta {delta} negative")));
    }
    if dim_u < 1 {
        return Err(Error::InvalidArgument("dimU must be >= 1".into()));
    }
    Ok(2.0 * delta * log2(dim_u as f64) + g_func(delta)?)
}

/// Binary entropy h₂(p) in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * log2(p) - (1.0 - p) * log2(1.0 - p)
}

/// Sharp Fannes–Audenaert bound: |S(ρ)-S(σ)| ≤ δ log(d-1) + h₂(δ) for
/// ½||ρ-σ||₁ ≤ δ ≤ 1 - 1/d, and log d beyond that.
pub fn fannes_audenaert_bound(delta: f64, dim: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("delta {delta} outside [0,1]")));
    }
    if dim < 2 {
        return Err(Error::InvalidArgument("dim must be >= 2".into()));
    }
    let d = dim as f64;
    if delta <= 1.0 - 1.0 / d {
        Ok(delta * log2(d - 1.0) + binary_entropy(delta))
    } else {
        Ok(log2(d))
    }
}

/// The continuity cost the converse chains charge per Fannes application:
/// 2δ log(dim) + h₂(min(δ,1)). Larger than the sharp Fannes–Audenaert
/// bound, so chain inequalities charged with it remain valid.
pub fn fannes_chain_term(delta: f64, dim: usize) -> f64 {
    let d = if dim < 1 { 1 } else { dim };
    2.0 * delta * log2(d as f64) + binary_entropy(delta.min(1.0))
}

/// Purity of a density matrix, Tr(ρ²).
pub fn purity(rho: &CMat) -> f64 {
    linalg::trace(&(rho * rho)).re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::SystemLayout;
    use crate::linalg::{c, CVec};
    use crate::state::{haar_pure, max_entangled, rng_stream, QuantumState};
    use approx::assert_abs_diff_eq;

    fn diag_state(p: f64) -> QuantumState {
        let rho = CMat::from_diagonal(&CVec::from_vec(vec![c(p, 0.0), c(1.0 - p, 0.0)]));
        QuantumState::mixed(SystemLayout::of(&[("A", 2)]), rho).unwrap()
    }

    #[test]
    fn entropy_fixed_points() {
        let mm = QuantumState::maximally_mixed(SystemLayout::of(&[("A", 2)]));
        assert_abs_diff_eq!(von_neumann_entropy(&mm, &["A"]).unwrap(), 1.0, epsilon = 1e-12);

        let bell = max_entangled("A", "B", 2).unwrap();
        assert_abs_diff_eq!(
            von_neumann_entropy(&bell, &["A", "B"]).unwrap(),
            0.0,
            epsilon = 1e-12
        );

        // closed form -0.75 log 0.75 - 0.25 log 0.25 = 0.811278 bits
        let s = von_neumann_entropy(&diag_state(0.75), &["A"]).unwrap();
        assert_abs_diff_eq!(s, 0.811278, epsilon = 1e-6);
    }

    #[test]
    fn unknown_register_is_error() {
        let mm = QuantumState::maximally_mixed(SystemLayout::of(&[("A", 2)]));
        assert!(von_neumann_entropy(&mm, &["Q"]).is_err());
    }

    #[test]
    fn mutual_info_product_and_bell() {
        let a = QuantumState::maximally_mixed(SystemLayout::of(&[("A", 2)]));
        let b = diag_state(0.75).rename_register("A", "B").unwrap();
        let prod = a.tensor(&b).unwrap();
        assert_abs_diff_eq!(mutual_info(&prod, &["A"], &["B"]).unwrap(), 0.0, epsilon = 1e-10);

        let bell = max_entangled("A", "R", 2).unwrap();
        assert_abs_diff_eq!(mutual_info(&bell, &["A"], &["R"]).unwrap(), 2.0, epsilon = 1e-10);
    }

    #[test]
    fn ghz_conditional_mutual_info() {
        // (|000> + |111>)/√2 on A,B,R: I(A:R|B) = 1 bit.
        let layout = SystemLayout::of(&[("A", 2), ("B", 2), ("R", 2)]);
        let mut v = CVec::zeros(8);
        v[0] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        v[7] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let ghz = QuantumState::pure(layout, v).unwrap();
        assert_abs_diff_eq!(
            cond_mutual_info(&ghz, &["A"], &["R"], &["B"]).unwrap(),
            1.0,
            epsilon = 1e-10
        );
        assert!(cond_mutual_info(&ghz, &["A"], &["A"], &["B"]).is_err());
    }

    #[test]
    fn fidelity_cases() {
        let zero = QuantumState::basis(SystemLayout::of(&[("A", 2)]), 0).unwrap();
        let one = QuantumState::basis(SystemLayout::of(&[("A", 2)]), 1).unwrap();
        let plus = QuantumState::pure(
            SystemLayout::of(&[("A", 2)]),
            CVec::from_vec(vec![
                c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            ]),
        )
        .unwrap();
        assert_abs_diff_eq!(fidelity(&zero, &zero).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&zero, &one).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&zero, &plus).unwrap(), 0.70711, epsilon = 1e-5);

        // mixed-mixed path agrees with the pure shortcut
        let mm = QuantumState::maximally_mixed(SystemLayout::of(&[("A", 2)]));
        let f_shortcut = fidelity(&zero, &mm).unwrap();
        let zero_mixed =
            QuantumState::mixed(SystemLayout::of(&[("A", 2)]), zero.density()).unwrap();
        let f_full = fidelity(&zero_mixed, &mm).unwrap();
        assert_abs_diff_eq!(f_shortcut, f_full, epsilon = 1e-10);
    }

    #[test]
    fn trace_distance_cases() {
        let zero = QuantumState::basis(SystemLayout::of(&[("A", 2)]), 0).unwrap();
        let one = QuantumState::basis(SystemLayout::of(&[("A", 2)]), 1).unwrap();
        assert_abs_diff_eq!(trace_distance(&zero, &zero).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_distance(&zero, &one).unwrap(), 1.0, epsilon = 1e-12);
        let mm = QuantumState::maximally_mixed(SystemLayout::of(&[("A", 2)]));
        assert_abs_diff_eq!(
            trace_distance(&diag_state(0.75), &mm).unwrap(),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn fvdg_band_contains_trace_distance() {
        let zero = QuantumState::basis(SystemLayout::of(&[("A", 2)]), 0).unwrap();
        let (lo, hi) = fvdg_band(&zero, &zero).unwrap();
        assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.0, epsilon = 1e-12);
        let one = QuantumState::basis(SystemLayout::of(&[("A", 2)]), 1).unwrap();
        let (lo, hi) = fvdg_band(&zero, &one).unwrap();
        assert_abs_diff_eq!(lo, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);

        let mut rng = rng_stream(21, 0);
        for _ in 0..200 {
            let a = haar_pure(SystemLayout::of(&[("A", 3)]), &mut rng);
            let b = crate::state::random_mixed(SystemLayout::of(&[("A", 3)]), 3, &mut rng);
            let td = trace_distance(&a, &b).unwrap();
            let (lo, hi) = fvdg_band(&a, &b).unwrap();
            assert!(lo <= td + 1e-9 && td <= hi + 1e-9, "band violated: {lo} {td} {hi}");
        }
    }

    #[test]
    fn g_and_afw_values() {
        assert_abs_diff_eq!(g_func(0.0).unwrap(), 0.0, epsilon = 1e-15);
        // independent closed-form evaluation: g(0.1) = 1.1 log2 1.1 - 0.1 log2 0.1
        assert_abs_diff_eq!(g_func(0.1).unwrap(), 0.4834471, epsilon = 1e-6);
        assert_abs_diff_eq!(afw_bound(0.0, 5).unwrap(), 0.0, epsilon = 1e-15);
        // 2·0.1·log2(2) + g(0.1)
        assert_abs_diff_eq!(afw_bound(0.1, 2).unwrap(), 0.6834471, epsilon = 1e-6);
        assert!(afw_bound(-0.1, 2).is_err());
    }

    #[test]
    fn fannes_audenaert_values() {
        assert_abs_diff_eq!(fannes_audenaert_bound(0.0, 2).unwrap(), 0.0, epsilon = 1e-15);
        // d=2: bound is h2(0.1) = 0.4689956
        assert_abs_diff_eq!(fannes_audenaert_bound(0.1, 2).unwrap(), 0.4689956, epsilon = 1e-6);
        // past 1 - 1/d it saturates at log d
        assert_abs_diff_eq!(fannes_audenaert_bound(0.9, 2).unwrap(), 1.0, epsilon = 1e-12);
        assert!(fannes_audenaert_bound(1.5, 2).is_err());
    }

    #[test]
    fn purity_duality_on_pure_states() {
        let mut rng = rng_stream(33, 0);
        for _ in 0..50 {
            let psi = haar_pure(SystemLayout::of(&[("P", 3), ("Q", 4)]), &mut rng);
            let sp = von_neumann_entropy(&psi, &["P"]).unwrap();
            let sq = von_neumann_entropy(&psi, &["Q"]).unwrap();
            assert_abs_diff_eq!(sp, sq, epsilon = 1e-10);
        }
    }
}
