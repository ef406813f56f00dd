//! Quantum states and operators over labeled register layouts.
//!
//! States are immutable after construction. Pure states keep their
//! amplitude vector; mixed states keep a dense density matrix. All
//! multipartite bookkeeping (tensor products, partial traces, register
//! permutations, purification) goes through the row-major addressing of
//! [`SystemLayout`].

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::layout::SystemLayout;
use crate::linalg::{self, c, cone, czero, CMat, CVec};
use crate::{Error, Result};

const NORM_TOL: f64 = 1e-10;
const HERM_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;

/// Deterministic RNG for a (seed, stream) pair; independent streams are
/// used for concurrent restarts and trials.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A dense operator over a layout (square matrix of side `total_dim`).
#[derive(Debug, Clone)]
pub struct Operator {
    layout: SystemLayout,
    mat: CMat,
}

impl Operator {
    pub fn new(layout: SystemLayout, mat: CMat) -> Result<Self> {
        let d = layout.total_dim();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::Dimension(format!(
                "operator is {}x{} but layout dim is {d}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Operator { layout, mat })
    }

    pub fn identity(layout: SystemLayout) -> Self {
        let d = layout.total_dim();
        Operator { layout, mat: linalg::identity(d) }
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        linalg::hermiticity_defect(&self.mat) <= tol
    }

    pub fn tensor(&self, other: &Operator) -> Result<Operator> {
        let layout = self.layout.concat(&other.layout)?;
        Ok(Operator { layout, mat: linalg::kron(&self.mat, &other.mat) })
    }

    /// Reindex to a different register order.
    pub fn permute(&self, order: &[&str]) -> Result<Operator> {
        let target = reorder_layout(&self.layout, order)?;
        let perm = self.layout.permutation_to(&target)?;
        let d = self.mat.nrows();
        let mut out = CMat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                out[(perm[i], perm[j])] = self.mat[(i, j)];
            }
        }
        Ok(Operator { layout: target, mat: out })
    }

    /// Replace a contiguous run of registers by one fused register; the
    /// matrix is unchanged (row-major contiguity).
    pub fn fuse(&self, names: &[&str], new_name: &str) -> Result<Operator> {
        let layout = fuse_layout(&self.layout, names, new_name)?;
        Ok(Operator { layout, mat: self.mat.clone() })
    }

    pub fn rename(&self, from: &str, to: &str) -> Result<Operator> {
        Ok(Operator { layout: self.layout.rename(from, to)?, mat: self.mat.clone() })
    }

    /// Tr(rho * self) for a state on the same registers (any order).
    pub fn expectation(&self, s: &QuantumState) -> Result<f64> {
        let aligned = s.permute(&self.layout.names())?;
        let val = match &aligned.form {
            StateForm::Pure(v) => {
                let mv = &self.mat * v;
                v.dotc(&mv)
            }
            StateForm::Mixed(r) => linalg::trace(&(&self.mat * r)),
        };
        Ok(val.re)
    }
}

#[derive(Debug, Clone)]
pub enum StateForm {
    Pure(CVec),
    Mixed(CMat),
}

#[derive(Debug, Clone)]
pub struct QuantumState {
    layout: SystemLayout,
    form: StateForm,
}

impl QuantumState {
    /// A pure state from an amplitude vector (unit norm within 1e-10).
    pub fn pure(layout: SystemLayout, amplitudes: CVec) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(Error::Dimension(format!(
                "amplitude length {} vs layout dim {}",
                amplitudes.len(),
                layout.total_dim()
            )));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!(
                "pure state norm {norm} is not 1 within {NORM_TOL:.0e}"
            )));
        }
        Ok(QuantumState { layout, form: StateForm::Pure(amplitudes) })
    }

    /// A mixed state from a density matrix (Hermitian, PSD, unit trace).
    pub fn mixed(layout: SystemLayout, rho: CMat) -> Result<Self> {
        let d = layout.total_dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::Dimension(format!(
                "density matrix is {}x{} but layout dim is {d}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let herm = linalg::hermiticity_defect(&rho);
        if herm > HERM_TOL {
            return Err(Error::InvalidState(format!(
                "density matrix hermiticity defect {herm:.3e}"
            )));
        }
        let tr = linalg::trace(&rho);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let min_eig = linalg::eigh_values(&rho).first().copied().unwrap_or(0.0);
        if min_eig < -linalg::PSD_TOL {
            return Err(Error::InvalidState(format!(
                "density matrix has eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(QuantumState { layout, form: StateForm::Mixed(rho) })
    }

    /// Internal constructor for outputs that are valid by construction
    /// (partial traces, channel outputs). Checks shape and trace, but skips
    /// the eigenvalue scan; the PSD invariant for these paths is covered by
    /// property tests.
    pub(crate) fn mixed_trusted(layout: SystemLayout, rho: CMat) -> Result<Self> {
        let d = layout.total_dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::Dimension("density matrix / layout mismatch".into()));
        }
        debug_assert!(linalg::hermiticity_defect(&rho) <= 1e-8);
        let tr = linalg::trace(&rho);
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return Err(Error::Numerical(format!("trace drifted to {tr}")));
        }
        Ok(QuantumState { layout, form: StateForm::Mixed(rho) })
    }

    /// Computational basis state |k> over the layout.
    pub fn basis(layout: SystemLayout, k: usize) -> Result<Self> {
        let d = layout.total_dim();
        if k >= d {
            return Err(Error::Dimension(format!("basis index {k} out of {d}")));
        }
        QuantumState::pure(layout, linalg::basis_vec(d, k))
    }

    /// Maximally mixed state over the layout.
    pub fn maximally_mixed(layout: SystemLayout) -> Self {
        let d = layout.total_dim();
        let rho = linalg::identity(d) / c(d as f64, 0.0);
        QuantumState { layout, form: StateForm::Mixed(rho) }
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn form(&self) -> &StateForm {
        &self.form
    }

    pub fn is_pure_form(&self) -> bool {
        matches!(self.form, StateForm::Pure(_))
    }

    pub fn amplitudes(&self) -> Option<&CVec> {
        match &self.form {
            StateForm::Pure(v) => Some(v),
            StateForm::Mixed(_) => None,
        }
    }

    pub fn total_dim(&self) -> usize {
        self.layout.total_dim()
    }

    /// Density matrix view (constructed on demand for pure states).
    pub fn density(&self) -> CMat {
        match &self.form {
            StateForm::Pure(v) => {
                let d = v.len();
                let mut rho = CMat::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        rho[(i, j)] = v[i] * v[j].conj();
                    }
                }
                rho
            }
            StateForm::Mixed(r) => r.clone(),
        }
    }

    /// Tensor product; register names must be disjoint.
    pub fn tensor(&self, other: &QuantumState) -> Result<QuantumState> {
        let layout = self.layout.concat(&other.layout)?;
        let form = match (&self.form, &other.form) {
            (StateForm::Pure(a), StateForm::Pure(b)) => StateForm::Pure(linalg::kron_vec(a, b)),
            _ => StateForm::Mixed(linalg::kron(&self.density(), &other.density())),
        };
        Ok(QuantumState { layout, form })
    }

    pub fn rename_register(&self, from: &str, to: &str) -> Result<QuantumState> {
        Ok(QuantumState { layout: self.layout.rename(from, to)?, form: self.form.clone() })
    }

    /// Explicit register reindexing to the given order (same register set).
    pub fn permute(&self, order: &[&str]) -> Result<QuantumState> {
        if order == self.layout.names().as_slice() {
            return Ok(self.clone());
        }
        let target = reorder_layout(&self.layout, order)?;
        let perm = self.layout.permutation_to(&target)?;
        let form = match &self.form {
            StateForm::Pure(v) => {
                let mut out = CVec::zeros(v.len());
                for i in 0..v.len() {
                    out[perm[i]] = v[i];
                }
                StateForm::Pure(out)
            }
            StateForm::Mixed(r) => {
                let d = r.nrows();
                let mut out = CMat::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        out[(perm[i], perm[j])] = r[(i, j)];
                    }
                }
                StateForm::Mixed(out)
            }
        };
        Ok(QuantumState { layout: target, form })
    }

    /// Replace a contiguous run of registers by one fused register.
    pub fn fuse(&self, names: &[&str], new_name: &str) -> Result<QuantumState> {
        let layout = fuse_layout(&self.layout, names, new_name)?;
        Ok(QuantumState { layout, form: self.form.clone() })
    }

    /// Reduced state on the named registers (original order preserved).
    /// Keeping every register returns the state unchanged.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<QuantumState> {
        if keep.is_empty() {
            return Err(Error::Addressing("partial_trace: empty keep set".into()));
        }
        for k in keep {
            self.layout.position(k)?;
        }
        if keep.len() == self.layout.len() {
            return Ok(self.clone());
        }
        let keep_layout = self.layout.subset(keep)?;
        let tr_layout = self.layout.complement(keep)?;
        let keep_off = offsets_for(&self.layout, &keep_layout);
        let tr_off = offsets_for(&self.layout, &tr_layout);
        let dk = keep_layout.total_dim();
        let dt = tr_layout.total_dim();

        let rho = match &self.form {
            StateForm::Pure(v) => {
                // Reshape to dk x dt, then rho = M M†.
                let mut m = CMat::zeros(dk, dt);
                for (a, &ka) in keep_off.iter().enumerate() {
                    for (t, &tt) in tr_off.iter().enumerate() {
                        m[(a, t)] = v[ka + tt];
                    }
                }
                &m * m.adjoint()
            }
            StateForm::Mixed(r) => {
                let mut out = CMat::zeros(dk, dk);
                for (a, &ka) in keep_off.iter().enumerate() {
                    for (b, &kb) in keep_off.iter().enumerate() {
                        let mut acc = czero();
                        for &tt in &tr_off {
                            acc += r[(ka + tt, kb + tt)];
                        }
                        out[(a, b)] = acc;
                    }
                }
                out
            }
        };
        QuantumState::mixed_trusted(keep_layout, rho)
    }

    /// Purification over a fresh reference register padded to the full
    /// dimension of the input. For an already-pure input this is just
    /// `self ⊗ |0>_ref`; otherwise the eigenvectors (descending eigenvalue)
    /// define the Schmidt pairing.
    pub fn purify(&self, ref_name: &str) -> Result<QuantumState> {
        if self.layout.contains(ref_name) {
            return Err(Error::Addressing(format!(
                "reference name {ref_name} already in use"
            )));
        }
        let d = self.total_dim();
        let ref_layout = SystemLayout::new(vec![(ref_name.to_string(), d)])?;
        match &self.form {
            StateForm::Pure(_) => {
                let ref_state = QuantumState::basis(ref_layout, 0)?;
                self.tensor(&ref_state)
            }
            StateForm::Mixed(rho) => {
                let (vals, vecs) = linalg::eigh(rho);
                let vals = linalg::clamp_psd_spectrum(&vals, linalg::PSD_TOL)?;
                let layout = self.layout.concat(&ref_layout)?;
                let mut amp = CVec::zeros(d * d);
                for (k, &lam) in vals.iter().enumerate() {
                    if lam <= 0.0 {
                        continue;
                    }
                    let s = lam.sqrt();
                    let col = vecs.column(k);
                    for i in 0..d {
                        amp[i * d + k] = col[i] * c(s, 0.0);
                    }
                }
                QuantumState::pure(layout, amp)
            }
        }
    }

    /// Renormalized projection onto basis state `k` of register `reg`:
    /// returns (weight, conditional state on the remaining registers),
    /// or weight 0 and None when the branch is empty.
    pub fn project_register(&self, reg: &str, k: usize) -> Result<(f64, Option<QuantumState>)> {
        let pos = self.layout.position(reg)?;
        let dim = self.layout.registers()[pos].1;
        if k >= dim {
            return Err(Error::Dimension(format!("branch index {k} out of {dim}")));
        }
        let rest = self.layout.complement(&[reg])?;
        let rest_off = offsets_for(&self.layout, &rest);
        let stride = self.layout.strides()[pos];
        let dr = rest.total_dim();
        match &self.form {
            StateForm::Pure(v) => {
                let mut branch = CVec::zeros(dr);
                for (i, &off) in rest_off.iter().enumerate() {
                    branch[i] = v[off + k * stride];
                }
                let w = branch.norm_squared();
                if w <= 1e-300 {
                    return Ok((0.0, None));
                }
                let branch = branch / c(w.sqrt(), 0.0);
                Ok((w, Some(QuantumState::pure(rest, branch)?)))
            }
            StateForm::Mixed(r) => {
                let mut block = CMat::zeros(dr, dr);
                for (i, &oi) in rest_off.iter().enumerate() {
                    for (j, &oj) in rest_off.iter().enumerate() {
                        block[(i, j)] = r[(oi + k * stride, oj + k * stride)];
                    }
                }
                let w = linalg::trace(&block).re;
                if w <= 1e-14 {
                    return Ok((0.0, None));
                }
                let block = block / c(w, 0.0);
                Ok((w, Some(QuantumState::mixed_trusted(rest, block)?)))
            }
        }
    }
}

/// Flat offsets contributed by a sub-layout's registers inside the parent
/// layout, enumerated in the sub-layout's own row-major order.
pub(crate) fn offsets_for(parent: &SystemLayout, sub: &SystemLayout) -> Vec<usize> {
    let strides = parent.strides();
    let positions: Vec<usize> = sub
        .registers()
        .iter()
        .map(|(n, _)| parent.position(n).expect("sub register in parent"))
        .collect();
    let dims: Vec<usize> = sub.registers().iter().map(|(_, d)| *d).collect();
    let total = sub.total_dim();
    let mut offsets = Vec::with_capacity(total);
    let mut multi = vec![0usize; dims.len()];
    for _ in 0..total {
        let off = multi
            .iter()
            .zip(&positions)
            .map(|(i, &p)| i * strides[p])
            .sum();
        offsets.push(off);
        for k in (0..dims.len()).rev() {
            multi[k] += 1;
            if multi[k] < dims[k] {
                break;
            }
            multi[k] = 0;
        }
    }
    offsets
}

fn reorder_layout(layout: &SystemLayout, order: &[&str]) -> Result<SystemLayout> {
    if order.len() != layout.len() {
        return Err(Error::Addressing(format!(
            "permutation lists {} registers, layout has {}",
            order.len(),
            layout.len()
        )));
    }
    let mut regs = Vec::with_capacity(order.len());
    for name in order {
        let pos = layout.position(name)?;
        regs.push(layout.registers()[pos].clone());
    }
    SystemLayout::new(regs)
}

fn fuse_layout(layout: &SystemLayout, names: &[&str], new_name: &str) -> Result<SystemLayout> {
    if names.is_empty() {
        return Err(Error::Addressing("fuse: empty register list".into()));
    }
    let start = layout.position(names[0])?;
    for (k, n) in names.iter().enumerate() {
        let p = layout.position(n)?;
        if p != start + k {
            return Err(Error::Addressing(
                "fuse requires contiguous registers in layout order".into(),
            ));
        }
    }
    let fused_dim: usize = names
        .iter()
        .map(|n| layout.dim_of(n).expect("checked"))
        .product();
    let mut regs: Vec<(String, usize)> = Vec::new();
    for (i, (n, d)) in layout.registers().iter().enumerate() {
        if i == start {
            regs.push((new_name.to_string(), fused_dim));
        }
        if i >= start && i < start + names.len() {
            continue;
        }
        regs.push((n.clone(), *d));
    }
    SystemLayout::new(regs)
}

/// Haar-random unitary: QR of a complex Ginibre matrix with the phase
/// correction that makes the distribution exactly Haar.
pub fn haar_unitary(dim: usize, rng: &mut impl Rng) -> CMat {
    haar_isometry(dim, dim, rng).expect("square case")
}

/// Haar isometry (out_dim x in_dim): distributed as the first `in_dim`
/// columns of a Haar unitary.
pub fn haar_isometry(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Result<CMat> {
    if out_dim < in_dim {
        return Err(Error::Dimension(format!(
            "isometry needs out_dim >= in_dim ({out_dim} < {in_dim})"
        )));
    }
    let g = ginibre(out_dim, in_dim, rng);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut v = q;
    for j in 0..in_dim {
        let rjj: crate::linalg::C64 = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / c(rjj.norm(), 0.0) } else { cone() };
        for i in 0..out_dim {
            v[(i, j)] *= phase;
        }
    }
    Ok(v)
}

/// Haar-random pure state over a layout.
pub fn haar_pure(layout: SystemLayout, rng: &mut impl Rng) -> QuantumState {
    let d = layout.total_dim();
    let mut v = CVec::zeros(d);
    for i in 0..d {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        v[i] = c(re, im);
    }
    let n = v.norm();
    v /= c(n, 0.0);
    QuantumState::pure(layout, v).expect("normalized by construction")
}

/// Random full-rank-ish mixed state: Haar pure on layout ⊗ env, env traced.
pub fn random_mixed(layout: SystemLayout, env_dim: usize, rng: &mut impl Rng) -> QuantumState {
    let env = SystemLayout::new(vec![("__env".to_string(), env_dim)]).unwrap();
    let joint = layout.concat(&env).unwrap();
    let pure = haar_pure(joint, rng);
    let names = layout.names();
    pure.partial_trace(&names).expect("env traced")
}

fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) / c(std::f64::consts::SQRT_2, 0.0)
    })
}

/// Maximally entangled pure state between two same-dim registers.
pub fn max_entangled(name_a: &str, name_b: &str, dim: usize) -> Result<QuantumState> {
    let layout = SystemLayout::new(vec![(name_a.to_string(), dim), (name_b.to_string(), dim)])?;
    let mut v = CVec::zeros(dim * dim);
    let a = 1.0 / (dim as f64).sqrt();
    for k in 0..dim {
        v[k * dim + k] = c(a, 0.0);
    }
    QuantumState::pure(layout, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bell() -> QuantumState {
        max_entangled("A", "B", 2).unwrap()
    }

    #[test]
    fn tensor_basis_states() {
        // |0> ⊗ |1> = |01>, amplitude vector (0,1,0,0)
        let a = QuantumState::basis(SystemLayout::of(&[("A", 2)]), 0).unwrap();
        let b = QuantumState::basis(SystemLayout::of(&[("B", 2)]), 1).unwrap();
        let ab = a.tensor(&b).unwrap();
        let amps = ab.amplitudes().unwrap();
        assert_abs_diff_eq!(amps[1].re, 1.0, epsilon = 1e-15);
        assert!(amps[0].norm() + amps[2].norm() + amps[3].norm() < 1e-15);
    }

    #[test]
    fn tensor_preserves_trace() {
        let mut rng = rng_stream(11, 0);
        let rho = random_mixed(SystemLayout::of(&[("A", 2)]), 2, &mut rng);
        let id_qubit = QuantumState::maximally_mixed(SystemLayout::of(&[("B", 2)]));
        let joint = rho.tensor(&id_qubit).unwrap();
        let tr = linalg::trace(&joint.density());
        assert_abs_diff_eq!(tr.re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tensor_name_collision_errors() {
        let a = QuantumState::basis(SystemLayout::of(&[("A", 2)]), 0).unwrap();
        assert!(a.tensor(&a).is_err());
    }

    #[test]
    fn bell_partial_trace_is_maximally_mixed() {
        let rho_a = bell().partial_trace(&["A"]).unwrap();
        let d = rho_a.density();
        assert_abs_diff_eq!(d[(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d[(1, 1)].re, 0.5, epsilon = 1e-12);
        assert!(d[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn partial_trace_keep_all_is_identity() {
        let s = bell();
        let t = s.partial_trace(&["A", "B"]).unwrap();
        assert!(t.is_pure_form());
        let diff = (s.density() - t.density()).map(|z| z.norm()).max();
        assert!(diff < 1e-14);
    }

    #[test]
    fn schmidt_oracle_for_three_register_trace() {
        // Eigenvalues of the A-marginal equal squared Schmidt coefficients
        // of the A:(BC) split, via SVD of the reshaped amplitude matrix.
        let layout = SystemLayout::of(&[("A", 2), ("B", 3), ("C", 2)]);
        let mut rng = rng_stream(5, 0);
        let psi = haar_pure(layout, &mut rng);
        let v = psi.amplitudes().unwrap().clone();
        let m = CMat::from_fn(2, 6, |i, j| v[i * 6 + j]);
        let mut schmidt_sq: Vec<f64> = m
            .svd(false, false)
            .singular_values
            .iter()
            .map(|s| s * s)
            .collect();
        schmidt_sq.sort_by(|a, b| b.partial_cmp(a).unwrap());

        let rho_a = psi.partial_trace(&["A"]).unwrap();
        let mut eigs = linalg::eigh_values(&rho_a.density());
        eigs.reverse();
        for (e, s) in eigs.iter().zip(&schmidt_sq) {
            assert_abs_diff_eq!(e, s, epsilon = 1e-10);
        }
    }

    #[test]
    fn sequential_traces_commute() {
        let layout = SystemLayout::of(&[("A", 2), ("B", 2), ("C", 3)]);
        let mut rng = rng_stream(7, 0);
        let psi = haar_pure(layout, &mut rng);
        let via_two = psi
            .partial_trace(&["A", "C"])
            .unwrap()
            .partial_trace(&["A"])
            .unwrap();
        let direct = psi.partial_trace(&["A"]).unwrap();
        let diff = (via_two.density() - direct.density()).map(|z| z.norm()).max();
        assert!(diff < 1e-12);
    }

    #[test]
    fn purify_pure_input_appends_zero_ref() {
        let s = bell();
        let p = s.purify("E").unwrap();
        assert_eq!(p.layout().names(), vec!["A", "B", "E"]);
        let amps = p.amplitudes().unwrap();
        // support only where the E index is 0
        for i in 0..amps.len() {
            if i % 4 != 0 {
                assert!(amps[i].norm() < 1e-15);
            }
        }
    }

    #[test]
    fn purify_round_trips_mixed_states() {
        let layout = SystemLayout::of(&[("A", 2)]);
        let rho = CMat::from_diagonal(&CVec::from_vec(vec![c(0.75, 0.0), c(0.25, 0.0)]));
        let s = QuantumState::mixed(layout, rho.clone()).unwrap();
        let p = s.purify("E").unwrap();
        let back = p.partial_trace(&["A"]).unwrap();
        let diff = (back.density() - rho).map(|z| z.norm()).max();
        assert!(diff < 1e-12);
        let mm = QuantumState::maximally_mixed(SystemLayout::of(&[("Q", 2)]));
        let pm = mm.purify("E").unwrap().partial_trace(&["Q"]).unwrap();
        assert_abs_diff_eq!(pm.density()[(0, 0)].re, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn project_register_branches() {
        let s = bell();
        let (w, branch) = s.project_register("B", 0).unwrap();
        assert_abs_diff_eq!(w, 0.5, epsilon = 1e-12);
        let b = branch.unwrap();
        assert_eq!(b.layout().names(), vec!["A"]);
        assert_abs_diff_eq!(b.amplitudes().unwrap()[0].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn haar_unitary_is_unitary_and_deterministic() {
        let mut rng = rng_stream(42, 0);
        let u = haar_unitary(4, &mut rng);
        let defect = linalg::max_abs_entry(&(&u * u.adjoint() - linalg::identity(4)));
        assert!(defect < 1e-10);
        let mut rng2 = rng_stream(42, 0);
        let u2 = haar_unitary(4, &mut rng2);
        assert_eq!(u, u2, "same seed must give bitwise-identical samples");
    }

    #[test]
    fn haar_one_dimensional_is_phase() {
        let mut rng = rng_stream(3, 0);
        let v = haar_isometry(1, 1, &mut rng).unwrap();
        assert_abs_diff_eq!(v[(0, 0)].norm(), 1.0, epsilon = 1e-12);
        assert!(haar_isometry(2, 1, &mut rng).is_err());
    }

    #[test]
    fn haar_column_statistics() {
        // 10^4 samples, in=1, out=2: E|first entry|^2 = 1/2 within 0.02.
        let mut rng = rng_stream(314, 0);
        let n = 10_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let v = haar_isometry(1, 2, &mut rng).unwrap();
            acc += v[(0, 0)].norm_sqr();
        }
        let mean = acc / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn fuse_is_pure_relabel() {
        let layout = SystemLayout::of(&[("A", 2), ("B", 3), ("C", 2)]);
        let mut rng = rng_stream(9, 0);
        let psi = haar_pure(layout, &mut rng);
        let fused = psi.fuse(&["A", "B"], "AB").unwrap();
        assert_eq!(fused.layout().names(), vec!["AB", "C"]);
        assert_eq!(fused.layout().dim_of("AB").unwrap(), 6);
        assert_eq!(psi.amplitudes().unwrap(), fused.amplitudes().unwrap());
        assert!(psi.fuse(&["A", "C"], "AC").is_err(), "non-contiguous fuse");
    }
}
