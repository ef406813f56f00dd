//! The K function of ensemble sources: penalized estimation of the
//! supremum of ½ I(W:X|Ĉ) under an ensemble-fidelity constraint, plus the
//! structural analyzers (reducibility, genericity, the reference-side
//! transfer operator) and the analytic bounds they enable.
//!
//! The estimator reports both the raw conditional mutual information
//! I(W:X|Ĉ) and its ½-prefactored value: the definition carries the ½
//! while the zero-distortion fixed point for orthogonal ensembles is
//! stated for the raw quantity, so both are exposed and each claim is
//! tested against the consistent choice.

use serde::{Deserialize, Serialize};

use crate::channels::IsometryMap;
use crate::distortion::{ensemble_observable, EnsembleSource};
use crate::entropics::{cond_mutual_info, fidelity_sq, g_func, log2};
use crate::layout::SystemLayout;
use crate::linalg::{self, c, CMat};
use crate::optimize::{multistart, PenaltyOptions};
use crate::state::{Operator, QuantumState};
use crate::{Error, Result};

/// Caps for the free environment dimensions; the decoded output registers
/// are isomorphic to the source registers by the fidelity criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KCaps {
    pub z: usize,
    pub w: usize,
    pub v: usize,
}

/// An ensemble instance with role registers (A, C, B, R') read off the
/// ensemble layout positionally.
#[derive(Debug, Clone)]
pub struct KInstance {
    pub ensemble: EnsembleSource,
    pub caps: KCaps,
}

#[derive(Debug, Clone)]
pub struct KRoles {
    pub a: String,
    pub c: String,
    pub b: String,
    pub r: String,
    pub a_dim: usize,
    pub c_dim: usize,
    pub b_dim: usize,
    pub r_dim: usize,
}

impl KInstance {
    pub fn new(ensemble: EnsembleSource, caps: KCaps) -> Result<Self> {
        if ensemble.layout().len() != 4 {
            return Err(Error::Addressing(
                "ensemble instances need exactly four registers (A, C, B, R')".into(),
            ));
        }
        for (n, _) in ensemble.layout().registers() {
            if ["Z", "Chat", "W", "Ahat", "Bhat", "V", "X", "Xp"].contains(&n.as_str()) {
                return Err(Error::Addressing(format!(
                    "source register name {n} collides with a derived register"
                )));
            }
        }
        if caps.z < 1 || caps.w < 1 || caps.v < 1 {
            return Err(Error::InvalidArgument("caps must be >= 1".into()));
        }
        let inst = KInstance { ensemble, caps };
        inst.parameterization()?;
        Ok(inst)
    }

    pub fn roles(&self) -> KRoles {
        let regs = self.ensemble.layout().registers();
        KRoles {
            a: regs[0].0.clone(),
            c: regs[1].0.clone(),
            b: regs[2].0.clone(),
            r: regs[3].0.clone(),
            a_dim: regs[0].1,
            c_dim: regs[1].1,
            b_dim: regs[2].1,
            r_dim: regs[3].1,
        }
    }

    /// Encoder U: AC -> Z Ĉ W and decoder Ũ: ZB -> Â B̂ V layouts.
    pub fn parameterization(&self) -> Result<(SystemLayout, SystemLayout, SystemLayout, SystemLayout)> {
        let r = self.roles();
        let enc_in = SystemLayout::new(vec![(r.a.clone(), r.a_dim), (r.c.clone(), r.c_dim)])?;
        let enc_out = SystemLayout::new(vec![
            ("Z".to_string(), self.caps.z),
            ("Chat".to_string(), r.c_dim),
            ("W".to_string(), self.caps.w),
        ])?;
        if enc_out.total_dim() < enc_in.total_dim() {
            return Err(Error::Dimension(format!(
                "encoder caps too small: z*w = {} < |A| = {}",
                self.caps.z * self.caps.w,
                r.a_dim
            )));
        }
        let dec_in = SystemLayout::new(vec![
            ("Z".to_string(), self.caps.z),
            (r.b.clone(), r.b_dim),
        ])?;
        let dec_out = SystemLayout::new(vec![
            ("Ahat".to_string(), r.a_dim),
            ("Bhat".to_string(), r.b_dim),
            ("V".to_string(), self.caps.v),
        ])?;
        if dec_out.total_dim() < dec_in.total_dim() {
            return Err(Error::Dimension(format!(
                "decoder caps too small: |A|*v = {} < z = {}",
                r.a_dim * self.caps.v,
                self.caps.z
            )));
        }
        Ok((enc_in, enc_out, dec_in, dec_out))
    }

    /// Purified source ω on [A, C, B, R', X, X'].
    pub fn omega(&self) -> Result<QuantumState> {
        self.ensemble.purified_source("X", "Xp")
    }

    /// The ensemble-fidelity observable Σ_x (1 - ψ_x) ⊗ |x><x| over the
    /// decoded registers.
    pub fn fidelity_observable(&self) -> Result<crate::distortion::DistortionMeasure> {
        let r = self.roles();
        ensemble_observable(
            &self.ensemble,
            &[
                (r.a.as_str(), "Ahat"),
                (r.c.as_str(), "Chat"),
                (r.b.as_str(), "Bhat"),
            ],
            "X",
        )
    }

    fn fast_objective(&self, d: f64) -> Result<crate::fasteval::TwoStageObjective> {
        let (enc_in, enc_out, dec_in, dec_out) = self.parameterization()?;
        let r = self.roles();
        let obs = self.fidelity_observable()?;
        let op = obs.as_observable().expect("ensemble observable");
        let omega = self.omega()?;
        let enc_regs: Vec<String> = enc_in.names().iter().map(|s| s.to_string()).collect();
        let dec_take: Vec<String> = dec_in.names().iter().map(|s| s.to_string()).collect();
        let eval = crate::fasteval::TwoStageEval::new(
            &omega,
            &enc_regs,
            &enc_out,
            &dec_take,
            &dec_out,
            (
                &["W".to_string()],
                &["X".to_string()],
                &["Chat".to_string()],
            ),
            -1.0,
            op.layout(),
            op.matrix().clone(),
            d,
        )?;
        let _ = r;
        Ok(crate::fasteval::TwoStageObjective { eval })
    }
}

/// States along the reference pipeline: the purified source ω, the
/// post-encoder σ, and the post-decoder τ (environments retained).
#[derive(Debug, Clone)]
pub struct KRun {
    pub omega: QuantumState,
    pub sigma: QuantumState,
    pub tau: QuantumState,
}

/// Apply an isometry pair to the purified source.
pub fn run_pair(instance: &KInstance, u: &IsometryMap, ut: &IsometryMap) -> Result<KRun> {
    let omega = instance.omega()?;
    let enc_names: Vec<&str> = u.in_layout().names();
    let sigma = u.apply(&omega, &enc_names)?;
    let dec_names: Vec<&str> = ut.in_layout().names();
    let tau = ut.apply(&sigma, &dec_names)?;
    Ok(KRun { omega, sigma, tau })
}

/// The K objective of a pair: (½ I(W:X|Ĉ) on σ, ensemble fidelity on τ).
pub fn k_objective(
    u: &IsometryMap,
    ut: &IsometryMap,
    instance: &KInstance,
) -> Result<(f64, f64)> {
    let run = run_pair(instance, u, ut)?;
    let k_value = 0.5 * cond_mutual_info(&run.sigma, &["W"], &["X"], &["Chat"])?;
    let fid = ensemble_fidelity_of_tau(instance, &run.tau)?;
    Ok((k_value, fid))
}

/// Σ_x p(x) F²(ψ_x, τ_x) via branch projection on the classical X.
pub fn ensemble_fidelity_of_tau(instance: &KInstance, tau: &QuantumState) -> Result<f64> {
    let r = instance.roles();
    let mut total = 0.0;
    for (x, (p, psi)) in instance
        .ensemble
        .probs()
        .iter()
        .zip(instance.ensemble.states())
        .enumerate()
    {
        let (w, branch) = tau.project_register("X", x)?;
        let Some(branch) = branch else { continue };
        let reference = psi
            .rename_register(&r.a, "Ahat")?
            .rename_register(&r.c, "Chat")?
            .rename_register(&r.b, "Bhat")?;
        let names = reference.layout().names();
        let reduced = branch.partial_trace(&names)?.permute(&names)?;
        let f2 = fidelity_sq(&reference, &reduced)?;
        // branch weights equal p(x) exactly since X is untouched
        debug_assert!((w - p).abs() < 1e-9);
        total += p * f2;
    }
    Ok(total)
}

/// One estimated point of K(D).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KPoint {
    pub d: f64,
    /// ½-prefactored estimate (the Definition's normalization); a lower
    /// bound on K(D) at the caps.
    pub k_half: f64,
    /// Raw I(W:X|Ĉ) estimate (= 2·k_half).
    pub k_raw: f64,
    pub fidelity_achieved: f64,
    pub feasible: bool,
    pub restarts_used: usize,
    pub seed: u64,
    pub z_cap: usize,
}

/// Estimate K(D): penalized multi-restart maximization of ½ I(W:X|Ĉ)
/// under Σ p(x) F² >= 1 - D, caps included. Returns the point and the
/// witnessing isometry pair.
pub fn estimate_k_with_pair(
    instance: &KInstance,
    d: f64,
    restarts: usize,
    seed: u64,
    feastol: f64,
) -> Result<(KPoint, (IsometryMap, IsometryMap))> {
    if d < 0.0 {
        return Err(Error::InvalidArgument("D must be >= 0".into()));
    }
    let fast = instance.fast_objective(d)?;
    let opts = PenaltyOptions { feastol, ..Default::default() };
    let out = multistart(&fast, restarts, seed, &opts);
    let (u, ut) = pair_from_params(instance, &out.best.params)?;
    let (k_half, fid) = k_objective(&u, &ut, instance)?;
    let feasible = fid >= 1.0 - d - feastol;
    let point = KPoint {
        d,
        k_half: if feasible { k_half.max(0.0) } else { 0.0 },
        k_raw: if feasible { (2.0 * k_half).max(0.0) } else { 0.0 },
        fidelity_achieved: fid,
        feasible,
        restarts_used: restarts,
        seed,
        z_cap: instance.caps.z,
    };
    Ok((point, (u, ut)))
}

pub fn estimate_k(
    instance: &KInstance,
    d: f64,
    restarts: usize,
    seed: u64,
    feastol: f64,
) -> Result<KPoint> {
    Ok(estimate_k_with_pair(instance, d, restarts, seed, feastol)?.0)
}

/// The decreasing-D sequence used to report the K(D→0) behaviour; the
/// limit itself is never claimed.
pub const KBAR_GRID: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// Evaluate K on the standard decreasing grid (an approximation sequence
/// for K̄(0), reported with the grid).
pub fn kbar0_sequence(
    instance: &KInstance,
    restarts: usize,
    seed: u64,
    feastol: f64,
) -> Result<Vec<KPoint>> {
    KBAR_GRID
        .iter()
        .map(|&d| estimate_k(instance, d, restarts, seed, feastol))
        .collect()
}

/// Materialize the isometry pair for a parameter vector of the instance's
/// search space.
pub fn pair_from_params(
    instance: &KInstance,
    params: &[f64],
) -> Result<(IsometryMap, IsometryMap)> {
    let (enc_in, enc_out, dec_in, dec_out) = instance.parameterization()?;
    let n_enc = enc_out.total_dim() * enc_out.total_dim();
    let n_dec = dec_out.total_dim() * dec_out.total_dim();
    if params.len() != n_enc + n_dec {
        return Err(Error::InvalidArgument(format!(
            "expected {} parameters, got {}",
            n_enc + n_dec,
            params.len()
        )));
    }
    let (pe, pd) = params.split_at(n_enc);
    Ok((
        IsometryMap::from_params(pe, enc_in, enc_out)?,
        IsometryMap::from_params(pd, dec_in, dec_out)?,
    ))
}

/// Exact identity-style pair: the encoder moves A into Z (and copies C to
/// Ĉ), the decoder moves Z back into Â. Fidelity is exactly 1. Requires
/// z >= |A| and v > z - |A|.
pub fn exact_pair(instance: &KInstance) -> Result<(IsometryMap, IsometryMap)> {
    let (enc_in, enc_out, dec_in, dec_out) = instance.parameterization()?;
    let r = instance.roles();
    if instance.caps.z < r.a_dim {
        return Err(Error::Dimension("exact pair needs z >= |A|".into()));
    }
    if instance.caps.v + r.a_dim < instance.caps.z + 1 {
        return Err(Error::Dimension("exact pair needs v > z - |A|".into()));
    }
    let mut u = CMat::zeros(enc_out.total_dim(), enc_in.total_dim());
    for a in 0..r.a_dim {
        for cc in 0..r.c_dim {
            let i = enc_in.flat_index(&[a, cc]);
            let o = enc_out.flat_index(&[a, cc, 0]);
            u[(o, i)] = linalg::cone();
        }
    }
    let mut ut = CMat::zeros(dec_out.total_dim(), dec_in.total_dim());
    for z in 0..instance.caps.z {
        for b in 0..r.b_dim {
            let i = dec_in.flat_index(&[z, b]);
            let o = if z < r.a_dim {
                dec_out.flat_index(&[z, b, 0])
            } else {
                dec_out.flat_index(&[0, b, 1 + z - r.a_dim])
            };
            ut[(o, i)] = linalg::cone();
        }
    }
    Ok((
        IsometryMap::new(enc_in, enc_out, u)?,
        IsometryMap::new(dec_in, dec_out, ut)?,
    ))
}

/// Random pair with verified ensemble fidelity >= 1 - D: a random
/// perturbation of the exact pair, deterministically shrunk until
/// feasible.
pub fn random_feasible_pair(
    instance: &KInstance,
    d: f64,
    seed: u64,
) -> Result<(IsometryMap, IsometryMap)> {
    let (u0, ut0) = exact_pair(instance)?;
    let mut pe = u0.recover_params()?;
    let mut pd = ut0.recover_params()?;
    let mut rng = crate::state::rng_stream(seed, 0);
    use rand::Rng;
    use rand_distr::StandardNormal;
    let noise_e: Vec<f64> = (0..pe.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let noise_d: Vec<f64> = (0..pd.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut delta = 0.5 * d.sqrt().max(1e-4);
    for _ in 0..40 {
        let qe: Vec<f64> = pe.iter().zip(&noise_e).map(|(p, n)| p + delta * n).collect();
        let qd: Vec<f64> = pd.iter().zip(&noise_d).map(|(p, n)| p + delta * n).collect();
        let (enc_in, enc_out, dec_in, dec_out) = instance.parameterization()?;
        let u = IsometryMap::from_params(&qe, enc_in, enc_out)?;
        let ut = IsometryMap::from_params(&qd, dec_in, dec_out)?;
        let (_, fid) = k_objective(&u, &ut, instance)?;
        if fid >= 1.0 - d {
            return Ok((u, ut));
        }
        delta *= 0.5;
    }
    pe.truncate(0);
    pd.truncate(0);
    Err(Error::Infeasible(
        "could not perturb the exact pair into the feasible set".into(),
    ))
}

/// Connected components of the signal-overlap graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducibilityReport {
    pub components: Vec<Vec<usize>>,
    pub y_labels: Vec<usize>,
    pub irreducible: bool,
    /// max |<ψ_x|ψ_x'>| over cross-component pairs (must be <= tol)
    pub max_cross_overlap: f64,
    /// true when the partition changes at 10x or 0.1x the tolerance
    pub tolerance_sensitive: bool,
}

fn components_at(ens: &EnsembleSource, tol: f64) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n = ens.len();
    let mut adj = vec![vec![]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let ov = linalg::overlap_abs(
                ens.states()[i].amplitudes().unwrap(),
                ens.states()[j].amplitudes().unwrap(),
            );
            if ov > tol {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        label[start] = id;
        while let Some(v) = stack.pop() {
            members.push(v);
            for &w in &adj[v] {
                if label[w] == usize::MAX {
                    label[w] = id;
                    stack.push(w);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    (comps, label)
}

/// Partition the ensemble into mutually orthogonal subspace components:
/// edges join states with |overlap| > tol, components are the connected
/// parts, and the labels y(x) realize the modified-source Y register.
pub fn reducibility_decompose(ens: &EnsembleSource, tol: f64) -> Result<ReducibilityReport> {
    if !(0.0..1.0).contains(&tol) || tol == 0.0 {
        return Err(Error::InvalidArgument("tolerance must lie in (0, 1)".into()));
    }
    let (components, y_labels) = components_at(ens, tol);
    let mut max_cross: f64 = 0.0;
    for i in 0..ens.len() {
        for j in (i + 1)..ens.len() {
            if y_labels[i] != y_labels[j] {
                let ov = linalg::overlap_abs(
                    ens.states()[i].amplitudes().unwrap(),
                    ens.states()[j].amplitudes().unwrap(),
                );
                max_cross = max_cross.max(ov);
            }
        }
    }
    let (c_hi, _) = components_at(ens, (tol * 10.0).min(0.999_999));
    let (c_lo, _) = components_at(ens, tol * 0.1);
    let tolerance_sensitive = c_hi.len() != components.len() || c_lo.len() != components.len();
    Ok(ReducibilityReport {
        irreducible: components.len() == 1,
        components,
        y_labels,
        max_cross_overlap: max_cross,
        tolerance_sensitive,
    })
}

/// Full-support witness scan: the source is generic when some signal's
/// reduced state on the non-reference registers has λ_min > tol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenericityReport {
    pub generic: bool,
    pub witness_x: Option<usize>,
    /// λ_min of the witness (or the best λ_min found when not generic)
    pub lambda0: f64,
}

pub fn genericity_check(ens: &EnsembleSource, tol: f64) -> Result<GenericityReport> {
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let regs = ens.layout().registers();
    let front: Vec<&str> = regs[..regs.len() - 1].iter().map(|(n, _)| n.as_str()).collect();
    let mut best = f64::NEG_INFINITY;
    for (x, psi) in ens.states().iter().enumerate() {
        let reduced = psi.partial_trace(&front)?;
        let lam = linalg::eigh_values(&reduced.density())[0];
        if lam > tol {
            return Ok(GenericityReport { generic: true, witness_x: Some(x), lambda0: lam });
        }
        best = best.max(lam);
    }
    Ok(GenericityReport { generic: false, witness_x: None, lambda0: best })
}

/// Reference-side transfer operator: T on R' with
/// (1 ⊗ T)|ψ0> = |ψx| up to phase, built in ψ0's Schmidt basis by
/// pseudo-inverting eigenvalues above λ0·1e-6. Its operator norm is
/// bounded by 1/√λ0.
pub fn tx_operator(
    psi0: &QuantumState,
    psix: &QuantumState,
    r_name: &str,
    tol: f64,
) -> Result<Operator> {
    if psi0.layout() != psix.layout() {
        return Err(Error::Dimension("states must share a layout".into()));
    }
    let v0 = psi0
        .amplitudes()
        .ok_or_else(|| Error::InvalidState("ψ0 must be pure".into()))?;
    let vx = psix
        .amplitudes()
        .ok_or_else(|| Error::InvalidState("ψx must be pure".into()))?;
    let layout = psi0.layout();
    let r_pos = layout.position(r_name)?;
    if r_pos != layout.len() - 1 {
        return Err(Error::Addressing(
            "reference register must be the trailing register".into(),
        ));
    }
    let dr = layout.dim_of(r_name)?;
    let df = layout.total_dim() / dr;

    let m0 = CMat::from_fn(df, dr, |f, r| v0[f * dr + r]);
    let mx = CMat::from_fn(df, dr, |f, r| vx[f * dr + r]);
    let svd = m0.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left vectors");
    let vt = svd.v_t.as_ref().expect("right vectors");
    let rank_dim = svd.singular_values.len();
    let lambda0 = svd
        .singular_values
        .iter()
        .map(|s| s * s)
        .fold(f64::INFINITY, f64::min)
        .min(1.0);
    let cutoff = (lambda0.max(tol) * 1e-6).sqrt();

    let mut t = CMat::zeros(dr, dr);
    for i in 0..rank_dim {
        let s = svd.singular_values[i];
        if s <= cutoff {
            continue;
        }
        // R'-side Schmidt vector of ψ0: w_i[r] = conj(Vt[i, r])
        // target: t_i[r] = Σ_f conj(U[f,i]) Mx[f,r]
        for row in 0..dr {
            let mut ti = linalg::czero();
            for f in 0..df {
                ti += u[(f, i)].conj() * mx[(f, row)];
            }
            for col in 0..dr {
                // w_i[col] = v_t[(i, col)], so <w_i| carries its conjugate
                let wi_conj = vt[(i, col)].conj();
                t[(row, col)] += ti * wi_conj / c(s, 0.0);
            }
        }
    }

    // verify reconstruction up to global phase
    let mut y = vec![linalg::czero(); df * dr];
    for f in 0..df {
        for r2 in 0..dr {
            let mut acc = linalg::czero();
            for r1 in 0..dr {
                acc += t[(r2, r1)] * m0[(f, r1)];
            }
            y[f * dr + r2] = acc;
        }
    }
    let norm: f64 = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut overlap = linalg::czero();
    for (a, b) in vx.iter().zip(&y) {
        overlap += a.conj() * b;
    }
    if (norm - 1.0).abs() > 1e-8 || overlap.norm() < 1.0 - 1e-8 {
        return Err(Error::Infeasible(format!(
            "ψx is not in the reachable support (norm {norm:.6}, overlap {:.6})",
            overlap.norm()
        )));
    }

    let r_layout = SystemLayout::new(vec![(r_name.to_string(), dr)])?;
    Operator::new(r_layout, t)
}

/// Lemma-2-style bound: ½ I(A : R'X | B) on the pure source minus K̄(0),
/// clamped at zero; an equality when C is trivial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Q0Bound {
    pub bound: f64,
    pub is_equality: bool,
    pub cmi_half: f64,
}

pub fn q0_lower_bound(instance: &KInstance, k_bar_zero: f64) -> Result<Q0Bound> {
    if k_bar_zero < 0.0 {
        return Err(Error::InvalidArgument("K̄(0) must be >= 0".into()));
    }
    let r = instance.roles();
    let psi = instance.ensemble.pure_source("X")?;
    let cmi_half = 0.5
        * cond_mutual_info(
            &psi,
            &[r.a.as_str()],
            &[r.r.as_str(), "X"],
            &[r.b.as_str()],
        )?;
    Ok(Q0Bound {
        bound: (cmi_half - k_bar_zero).max(0.0),
        is_equality: r.c_dim == 1,
        cmi_half,
    })
}

/// ½ (S(A) + S(A|Y)) of the modified source, with Y built from the
/// reducibility labels. Requires trivial C and B.
pub fn modified_schumacher_rate(ens: &EnsembleSource, tol: f64) -> Result<f64> {
    let regs = ens.layout().registers();
    if regs.len() != 4 || regs[1].1 != 1 || regs[2].1 != 1 {
        return Err(Error::InvalidArgument(
            "modified-source rate needs trivial C and B".into(),
        ));
    }
    let report = reducibility_decompose(ens, tol)?;
    let n_y = report.components.len();
    let a_dim = ens.layout().total_dim();
    let mut rho = CMat::zeros(a_dim * n_y, a_dim * n_y);
    for (x, (p, psi)) in ens.probs().iter().zip(ens.states()).enumerate() {
        let y = report.y_labels[x];
        let d = psi.density();
        for i in 0..a_dim {
            for j in 0..a_dim {
                rho[(i * n_y + y, j * n_y + y)] += d[(i, j)] * c(*p, 0.0);
            }
        }
    }
    let layout = SystemLayout::new(vec![("Am".to_string(), a_dim), ("Y".to_string(), n_y)])?;
    let omega = QuantumState::mixed_trusted(layout, rho)?;
    let sa = crate::entropics::von_neumann_entropy(&omega, &["Am"])?;
    let say = crate::entropics::von_neumann_entropy(&omega, &["Am", "Y"])?;
    let sy = crate::entropics::von_neumann_entropy(&omega, &["Y"])?;
    Ok(0.5 * (sa + (say - sy)))
}

/// Decoupling diagnostics for a feasible pair at distortion D.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecouplingReport {
    pub lhs: f64,
    pub bound: f64,
    pub ok: bool,
    /// Σ_x p(x) Σ_i λ_x(i)³ and its (1-D)³ floor
    pub cubic_lhs: f64,
    pub cubic_rhs: f64,
    pub cubic_ok: bool,
    pub fidelity: f64,
}

/// Check I(WV : R' | ĈX) on τ against 4√(6D) log|R'| + g(2√(6D)), plus
/// the cubic Schmidt-weight floor behind it.
pub fn decoupling_check(
    instance: &KInstance,
    u: &IsometryMap,
    ut: &IsometryMap,
    d: f64,
) -> Result<DecouplingReport> {
    let run = run_pair(instance, u, ut)?;
    let fid = ensemble_fidelity_of_tau(instance, &run.tau)?;
    if fid < 1.0 - d - 1e-9 {
        return Err(Error::Infeasible(format!(
            "pair has fidelity {fid}, below 1 - {d}"
        )));
    }
    let r = instance.roles();
    let lhs = cond_mutual_info(&run.tau, &["W", "V"], &[r.r.as_str()], &["Chat", "X"])?;
    let sd = (6.0 * d).sqrt();
    let bound = 4.0 * sd * log2(r.r_dim as f64) + g_func(2.0 * sd)?;

    let mut cubic = 0.0;
    for (x, p) in instance.ensemble.probs().iter().enumerate() {
        let (_, branch) = run.tau.project_register("X", x)?;
        let Some(branch) = branch else { continue };
        let wv = branch.partial_trace(&["W", "V"])?;
        let lams = linalg::clamp_psd_spectrum(&linalg::eigh_values(&wv.density()), 1e-9)?;
        cubic += p * lams.iter().map(|l| l * l * l).sum::<f64>();
    }
    let cubic_rhs = (1.0 - d).powi(3);
    Ok(DecouplingReport {
        lhs,
        bound,
        ok: lhs <= bound + 1e-9,
        cubic_lhs: cubic,
        cubic_rhs,
        cubic_ok: cubic >= cubic_rhs - 1e-9,
        fidelity: fid,
    })
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::linalg::CVec;

    pub fn qubit_ensemble(second: &str) -> EnsembleSource {
        let layout = SystemLayout::of(&[("A", 2), ("C", 1), ("B", 1), ("Rp", 1)]);
        let zero = QuantumState::basis(layout.clone(), 0).unwrap();
        let other = match second {
            "one" => QuantumState::basis(layout, 1).unwrap(),
            "plus" => QuantumState::pure(
                layout,
                CVec::from_vec(vec![
                    c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                    c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                ]),
            )
            .unwrap(),
            _ => unreachable!(),
        };
        EnsembleSource::new(vec![0.5, 0.5], vec![zero, other]).unwrap()
    }
}
