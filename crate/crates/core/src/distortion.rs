//! Distortion measures: observable-backed functionals, the named
//! infidelity observables, and the n-copy per-copy extension.
//!
//! Observables are stored over the decoded-output layout with explicit
//! register names, so the source-to-output identification is data, not
//! convention. Evaluation reduces the state to the observable's registers
//! (any order) and takes Tr(ρΔ).

use std::sync::Arc;

use crate::layout::{replica_name, SystemLayout};
use crate::linalg::{self, CMat};
use crate::state::{Operator, QuantumState};
use crate::{Error, Result};

/// An ensemble source {p(x), |ψ_x>} of pure states on a common layout
/// (the (A, C, B, R') registers; C, B, R' may be trivial).
#[derive(Debug, Clone)]
pub struct EnsembleSource {
    probs: Vec<f64>,
    states: Vec<QuantumState>,
}

impl EnsembleSource {
    pub fn new(probs: Vec<f64>, states: Vec<QuantumState>) -> Result<Self> {
        if probs.len() != states.len() || probs.is_empty() {
            return Err(Error::InvalidArgument(
                "ensemble needs matching, non-empty probs and states".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "ensemble probabilities sum to {total}"
            )));
        }
        if probs.iter().any(|p| *p < 0.0) {
            return Err(Error::InvalidArgument("negative ensemble probability".into()));
        }
        let layout = states[0].layout().clone();
        for s in &states {
            if s.layout() != &layout {
                return Err(Error::Dimension("ensemble states on differing layouts".into()));
            }
            if !s.is_pure_form() {
                return Err(Error::InvalidState("ensemble states must be pure".into()));
            }
        }
        Ok(EnsembleSource { probs, states })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn states(&self) -> &[QuantumState] {
        &self.states
    }

    pub fn layout(&self) -> &SystemLayout {
        self.states[0].layout()
    }

    /// The purified source Σ_x √p(x) |ψ_x> |x>^X (one classical copy).
    pub fn pure_source(&self, x_name: &str) -> Result<QuantumState> {
        let x_dim = self.len();
        let x_layout = SystemLayout::new(vec![(x_name.to_string(), x_dim)])?;
        let layout = self.layout().concat(&x_layout)?;
        let d = self.layout().total_dim();
        let mut amp = crate::linalg::CVec::zeros(d * x_dim);
        for (x, (p, s)) in self.probs.iter().zip(&self.states).enumerate() {
            let v = s.amplitudes().expect("ensemble states are pure");
            let w = p.sqrt();
            for i in 0..d {
                amp[i * x_dim + x] = v[i] * linalg::c(w, 0.0);
            }
        }
        QuantumState::pure(layout, amp)
    }

    /// The doubly-extended purification Σ_x √p(x) |ψ_x> |x>^X |x>^X'.
    pub fn purified_source(&self, x_name: &str, xp_name: &str) -> Result<QuantumState> {
        let x_dim = self.len();
        let first = self.pure_source(x_name)?;
        let xp_layout = SystemLayout::new(vec![(xp_name.to_string(), x_dim)])?;
        let layout = first.layout().concat(&xp_layout)?;
        let v = first.amplitudes().unwrap();
        let mut amp = crate::linalg::CVec::zeros(v.len() * x_dim);
        for i in 0..v.len() {
            let x = i % x_dim;
            amp[i * x_dim + x] = v[i];
        }
        QuantumState::pure(layout, amp)
    }
}

#[derive(Clone)]
enum MeasureKind {
    Observable(Operator),
    Functional {
        eval: Arc<dyn Fn(&QuantumState) -> Result<f64> + Send + Sync>,
        convex_certified: bool,
    },
}

impl std::fmt::Debug for MeasureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeasureKind::Observable(op) => write!(f, "Observable({:?})", op.layout()),
            MeasureKind::Functional { convex_certified, .. } => {
                write!(f, "Functional(convex_certified={convex_certified})")
            }
        }
    }
}

/// A convex continuous distortion functional on decoded states.
#[derive(Debug, Clone)]
pub struct DistortionMeasure {
    kind: MeasureKind,
}

impl DistortionMeasure {
    /// Observable-backed measure Δ(ρ) = Tr(ρΔ); the operator must be
    /// Hermitian within 1e-10.
    pub fn observable(op: Operator) -> Result<Self> {
        if !op.is_hermitian(1e-10) {
            return Err(Error::InvalidArgument(
                "distortion observable is not Hermitian".into(),
            ));
        }
        Ok(DistortionMeasure { kind: MeasureKind::Observable(op) })
    }

    /// General functional with a caller-declared convexity certificate;
    /// convexity of arbitrary closures is not checked numerically.
    pub fn functional(
        eval: impl Fn(&QuantumState) -> Result<f64> + Send + Sync + 'static,
        convex_certified: bool,
    ) -> Self {
        DistortionMeasure {
            kind: MeasureKind::Functional { eval: Arc::new(eval), convex_certified },
        }
    }

    pub fn as_observable(&self) -> Option<&Operator> {
        match &self.kind {
            MeasureKind::Observable(op) => Some(op),
            MeasureKind::Functional { .. } => None,
        }
    }

    pub fn is_convex_certified(&self) -> bool {
        match &self.kind {
            MeasureKind::Observable(_) => true,
            MeasureKind::Functional { convex_certified, .. } => *convex_certified,
        }
    }

    /// Registers the measure reads from the decoded state.
    pub fn registers(&self) -> Option<Vec<String>> {
        self.as_observable()
            .map(|op| op.layout().names().iter().map(|s| s.to_string()).collect())
    }

    /// Largest eigenvalue of the observable (the distortion level above
    /// which every code is feasible); None for functional measures.
    pub fn max_eigenvalue(&self) -> Option<f64> {
        self.as_observable()
            .map(|op| *linalg::eigh_values(op.matrix()).last().unwrap())
    }

    /// Evaluate on a decoded state. For observables the state is reduced
    /// to the observable's registers first.
    pub fn evaluate(&self, s: &QuantumState) -> Result<f64> {
        match &self.kind {
            MeasureKind::Observable(op) => {
                let names = op.layout().names();
                let reduced = if names.len() == s.layout().len() {
                    s.clone()
                } else {
                    s.partial_trace(&names)?
                };
                op.expectation(&reduced)
            }
            MeasureKind::Functional { eval, .. } => eval(s),
        }
    }

    /// Per-copy extension: the mean of single-copy evaluations over the n
    /// replica marginals (`reg1..regn` naming).
    pub fn evaluate_percopy(&self, s_n: &QuantumState, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be >= 1".into()));
        }
        if n == 1 && self.registers().map(|r| r.iter().all(|name| s_n.layout().contains(name))) == Some(true) {
            return self.evaluate(s_n);
        }
        let base = self.registers().ok_or_else(|| {
            Error::InvalidArgument("per-copy evaluation needs an observable measure".into())
        })?;
        let mut total = 0.0;
        for i in 1..=n {
            let copy_names: Vec<String> =
                base.iter().map(|b| replica_name(b, i)).collect();
            let keep: Vec<&str> = copy_names.iter().map(|s| s.as_str()).collect();
            let mut marginal = s_n.partial_trace(&keep)?;
            for (cname, bname) in copy_names.iter().zip(&base) {
                marginal = marginal.rename_register(cname, bname)?;
            }
            total += self.evaluate(&marginal)?;
        }
        Ok(total / n as f64)
    }
}

/// Δ = 1 - |ψ><ψ| over the decoded registers: the per-copy infidelity
/// observable of plain source compression. `map` renames each source
/// register to its decoded counterpart.
pub fn schumacher_observable(
    psi: &QuantumState,
    map: &[(&str, &str)],
) -> Result<DistortionMeasure> {
    if !psi.is_pure_form() {
        return Err(Error::InvalidState("reference state must be pure".into()));
    }
    let mut renamed = psi.clone();
    for (from, to) in map {
        renamed = renamed.rename_register(from, to)?;
    }
    let d = renamed.total_dim();
    let obs = linalg::identity(d) - renamed.density();
    DistortionMeasure::observable(Operator::new(renamed.layout().clone(), obs)?)
}

/// Δ = 1 - Σ_x |ψ_x><ψ_x| ⊗ |x><x|^X : the ensemble per-copy infidelity
/// observable. Signal registers are renamed per `map`; the classical
/// register is `x_name`.
pub fn ensemble_observable(
    ens: &EnsembleSource,
    map: &[(&str, &str)],
    x_name: &str,
) -> Result<DistortionMeasure> {
    let x_dim = ens.len();
    let mut layout: Option<SystemLayout> = None;
    let d = ens.layout().total_dim();
    let mut block = CMat::zeros(d * x_dim, d * x_dim);
    for (x, s) in ens.states().iter().enumerate() {
        let mut renamed = s.clone();
        for (from, to) in map {
            renamed = renamed.rename_register(from, to)?;
        }
        let proj = renamed.density();
        for i in 0..d {
            for j in 0..d {
                block[(i * x_dim + x, j * x_dim + x)] = proj[(i, j)];
            }
        }
        layout = Some(renamed.layout().clone());
    }
    let x_layout = SystemLayout::new(vec![(x_name.to_string(), x_dim)])?;
    let layout = layout.unwrap().concat(&x_layout)?;
    let obs = linalg::identity(d * x_dim) - block;
    DistortionMeasure::observable(Operator::new(layout, obs)?)
}

/// Ensemble fidelity Σ_x q(x) F²(ψ_x, branch_x) of a decoded state whose
/// register `x_name` is classical; branch weights are read off the state.
/// Complements the ensemble observable: equals 1 - Tr(ρΔ).
pub fn ensemble_fidelity(
    ens: &EnsembleSource,
    map: &[(&str, &str)],
    x_name: &str,
    decoded: &QuantumState,
) -> Result<f64> {
    let x_dim = decoded.layout().dim_of(x_name)?;
    if x_dim != ens.len() {
        return Err(Error::Dimension(format!(
            "classical register {x_name} has dim {x_dim}, ensemble has {} members",
            ens.len()
        )));
    }
    let mut total = 0.0;
    for (x, s) in ens.states().iter().enumerate() {
        let (w, branch) = decoded.project_register(x_name, x)?;
        let Some(branch) = branch else { continue };
        let mut reference = s.clone();
        for (from, to) in map {
            reference = reference.rename_register(from, to)?;
        }
        let names = reference.layout().names();
        let branch = branch.partial_trace(&names)?.permute(&names)?;
        total += w * crate::entropics::fidelity_sq(&reference, &branch)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, CVec};
    use crate::state::{haar_pure, max_entangled, rng_stream};
    use approx::assert_abs_diff_eq;

    fn bell_measure() -> (QuantumState, DistortionMeasure) {
        let psi = max_entangled("A", "R", 2).unwrap();
        let m = schumacher_observable(&psi, &[("A", "Bout")]).unwrap();
        (psi, m)
    }

    #[test]
    fn schumacher_zero_on_itself() {
        let (psi, m) = bell_measure();
        let decoded = psi.rename_register("A", "Bout").unwrap();
        assert_abs_diff_eq!(m.evaluate(&decoded).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn schumacher_one_on_orthogonal() {
        let (_, m) = bell_measure();
        // |01> is orthogonal to the Bell state
        let layout = SystemLayout::of(&[("Bout", 2), ("R", 2)]);
        let orth = QuantumState::basis(layout, 1).unwrap();
        assert_abs_diff_eq!(m.evaluate(&orth).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn schumacher_on_maximally_mixed() {
        // Δ = 1 - ψ on maximally mixed of dim d gives 1 - 1/d.
        let (_, m) = bell_measure();
        let mm = QuantumState::maximally_mixed(SystemLayout::of(&[("Bout", 2), ("R", 2)]));
        assert_abs_diff_eq!(m.evaluate(&mm).unwrap(), 1.0 - 0.25, epsilon = 1e-12);
    }

    #[test]
    fn observable_is_affine() {
        let (_, m) = bell_measure();
        let mut rng = rng_stream(40, 0);
        let layout = SystemLayout::of(&[("Bout", 2), ("R", 2)]);
        for _ in 0..20 {
            let a = crate::state::random_mixed(layout.clone(), 4, &mut rng);
            let b = crate::state::random_mixed(layout.clone(), 4, &mut rng);
            let p = 0.3;
            let mix = QuantumState::mixed_trusted(
                layout.clone(),
                a.density() * c(p, 0.0) + b.density() * c(1.0 - p, 0.0),
            )
            .unwrap();
            let lhs = m.evaluate(&mix).unwrap();
            let rhs = p * m.evaluate(&a).unwrap() + (1.0 - p) * m.evaluate(&b).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn percopy_reduces_to_single_and_averages() {
        let (psi, m) = bell_measure();
        let decoded = psi.rename_register("A", "Bout").unwrap();
        // n = 1 equals evaluate
        let one = m.evaluate_percopy(&decoded, 1).unwrap();
        assert_abs_diff_eq!(one, 0.0, epsilon = 1e-12);

        // product of two identical copies keeps the same value
        let copy1 = decoded
            .rename_register("Bout", "Bout1")
            .unwrap()
            .rename_register("R", "R1")
            .unwrap();
        let copy2 = decoded
            .rename_register("Bout", "Bout2")
            .unwrap()
            .rename_register("R", "R2")
            .unwrap();
        let two = copy1.tensor(&copy2).unwrap();
        assert_abs_diff_eq!(m.evaluate_percopy(&two, 2).unwrap(), 0.0, epsilon = 1e-12);

        // correlated 2-copy state: equals the mean of marginal evaluations
        let mut rng = rng_stream(41, 0);
        let layout = SystemLayout::of(&[("Bout1", 2), ("R1", 2), ("Bout2", 2), ("R2", 2)]);
        let corr = haar_pure(layout, &mut rng);
        let avg = m.evaluate_percopy(&corr, 2).unwrap();
        let m1 = corr
            .partial_trace(&["Bout1", "R1"])
            .unwrap()
            .rename_register("Bout1", "Bout")
            .unwrap()
            .rename_register("R1", "R")
            .unwrap();
        let m2 = corr
            .partial_trace(&["Bout2", "R2"])
            .unwrap()
            .rename_register("Bout2", "Bout")
            .unwrap()
            .rename_register("R2", "R")
            .unwrap();
        let want = 0.5 * (m.evaluate(&m1).unwrap() + m.evaluate(&m2).unwrap());
        assert_abs_diff_eq!(avg, want, epsilon = 1e-12);
    }

    fn two_state_ensemble(orthogonal: bool) -> EnsembleSource {
        let layout = SystemLayout::of(&[("A", 2)]);
        let zero = QuantumState::basis(layout.clone(), 0).unwrap();
        let second = if orthogonal {
            QuantumState::basis(layout, 1).unwrap()
        } else {
            QuantumState::pure(
                layout,
                CVec::from_vec(vec![
                    c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                    c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                ]),
            )
            .unwrap()
        };
        EnsembleSource::new(vec![0.5, 0.5], vec![zero, second]).unwrap()
    }

    #[test]
    fn ensemble_observable_perfect_decode() {
        let ens = two_state_ensemble(true);
        let m = ensemble_observable(&ens, &[("A", "Bout")], "X").unwrap();
        // perfectly decoded ensemble: Σ p_x ψ_x ⊗ |x><x|
        let layout = SystemLayout::of(&[("Bout", 2), ("X", 2)]);
        let mut rho = CMat::zeros(4, 4);
        rho[(0, 0)] = c(0.5, 0.0); // |0>⊗|0>
        rho[(3, 3)] = c(0.5, 0.0); // |1>⊗|1>
        let decoded = QuantumState::mixed(layout, rho).unwrap();
        assert_abs_diff_eq!(m.evaluate(&decoded).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            ensemble_fidelity(&ens, &[("A", "Bout")], "X", &decoded).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn ensemble_observable_mixed_decoder() {
        // decoder outputs maximally mixed for each x on qubit signals: 0.5
        let ens = two_state_ensemble(true);
        let m = ensemble_observable(&ens, &[("A", "Bout")], "X").unwrap();
        let layout = SystemLayout::of(&[("Bout", 2), ("X", 2)]);
        let mut rho = CMat::zeros(4, 4);
        for b in 0..2 {
            for x in 0..2 {
                rho[(b * 2 + x, b * 2 + x)] = c(0.25, 0.0);
            }
        }
        let decoded = QuantumState::mixed(layout, rho).unwrap();
        assert_abs_diff_eq!(m.evaluate(&decoded).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ensemble_observable_label_swap() {
        // orthogonal ensemble, decoder swaps labels: distortion 1
        let ens = two_state_ensemble(true);
        let m = ensemble_observable(&ens, &[("A", "Bout")], "X").unwrap();
        let layout = SystemLayout::of(&[("Bout", 2), ("X", 2)]);
        let mut rho = CMat::zeros(4, 4);
        rho[(2, 2)] = c(0.5, 0.0); // |1>⊗|0>
        rho[(1, 1)] = c(0.5, 0.0); // |0>⊗|1>
        let decoded = QuantumState::mixed(layout, rho).unwrap();
        assert_abs_diff_eq!(m.evaluate(&decoded).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ensemble_duality_on_random_cq_outputs() {
        let ens = two_state_ensemble(false);
        let m = ensemble_observable(&ens, &[("A", "Bout")], "X").unwrap();
        let mut rng = rng_stream(55, 0);
        let layout = SystemLayout::of(&[("Bout", 2), ("X", 2)]);
        for _ in 0..100 {
            // random cq state with exact branch weights 1/2
            let b0 = crate::state::random_mixed(SystemLayout::of(&[("Bout", 2)]), 2, &mut rng);
            let b1 = crate::state::random_mixed(SystemLayout::of(&[("Bout", 2)]), 2, &mut rng);
            let mut rho = CMat::zeros(4, 4);
            for i in 0..2 {
                for j in 0..2 {
                    rho[(i * 2, j * 2)] = b0.density()[(i, j)] * c(0.5, 0.0);
                    rho[(i * 2 + 1, j * 2 + 1)] = b1.density()[(i, j)] * c(0.5, 0.0);
                }
            }
            let decoded = QuantumState::mixed_trusted(layout.clone(), rho).unwrap();
            let f = ensemble_fidelity(&ens, &[("A", "Bout")], "X", &decoded).unwrap();
            let d = m.evaluate(&decoded).unwrap();
            assert_abs_diff_eq!(f, 1.0 - d, epsilon = 1e-12);
        }
    }

    #[test]
    fn hermiticity_enforced() {
        let layout = SystemLayout::of(&[("A", 2)]);
        let mut mat = CMat::zeros(2, 2);
        mat[(0, 1)] = c(1.0, 0.5);
        let op = Operator::new(layout, mat).unwrap();
        assert!(DistortionMeasure::observable(op).is_err());
    }
}
