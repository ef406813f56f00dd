//! Shared fast path for the two-stage (encoder, decoder) objectives of
//! the rate-distortion and K estimators.
//!
//! Both problems have the same shape: the value term is a conditional
//! mutual information of the post-encoder state only, and the constraint
//! is an observable expectation of the post-decoder state against a
//! threshold. This evaluator precomputes all index plans (reshapes,
//! partial traces, gathers) once per instance, and its gradient exploits
//! the block structure: perturbing a decoder coordinate cannot change the
//! value term, and restoration never needs entropies at all.
//!
//! `eval` here must agree with the reference path (isometry application
//! plus generic entropies/measures); the agreement is pinned by tests.

use nalgebra::DMatrix;

use crate::entropics::entropy_from_spectrum;
use crate::layout::SystemLayout;
use crate::linalg::{self, czero, C64, CMat};
use crate::optimize::{PenaltyObjective, Scalarization};
use crate::state::{offsets_for, QuantumState};
use crate::{Error, Result};

/// Index plan for one reduced density: M[a,t] = v[keep[a] + tr[t]],
/// rho = M M†.
#[derive(Debug, Clone)]
struct TracePlan {
    keep: Vec<usize>,
    tr: Vec<usize>,
}

impl TracePlan {
    fn build(parent: &SystemLayout, keep_regs: &[&str]) -> Result<TracePlan> {
        let keep_sub = parent.subset(keep_regs)?;
        let tr_sub = parent.complement(keep_regs)?;
        Ok(TracePlan {
            keep: offsets_for(parent, &keep_sub),
            tr: offsets_for(parent, &tr_sub),
        })
    }

    /// For a pure parent vector, entropy only needs the smaller side.
    fn build_smaller_side(parent: &SystemLayout, keep_regs: &[&str]) -> Result<TracePlan> {
        let keep_dim = parent.dim_of_set(keep_regs)?;
        let comp = parent.complement(keep_regs)?;
        if comp.total_dim() < keep_dim {
            let comp_names: Vec<&str> = comp.names();
            TracePlan::build(parent, &comp_names)
        } else {
            TracePlan::build(parent, keep_regs)
        }
    }

    fn entropy(&self, v: &[C64]) -> Result<f64> {
        let dk = self.keep.len();
        let dt = self.tr.len();
        let mut rho = DMatrix::<C64>::zeros(dk, dk);
        for a in 0..dk {
            for b in 0..=a {
                let mut acc = czero();
                for t in 0..dt {
                    acc += v[self.keep[a] + self.tr[t]] * v[self.keep[b] + self.tr[t]].conj();
                }
                rho[(a, b)] = acc;
                rho[(b, a)] = acc.conj();
            }
        }
        entropy_from_spectrum(&linalg::eigh_values(&rho))
    }
}

/// S(ac) + S(bc) - S(abc) - S(c) from four plans (None = dimension-1 side
/// contributing zero entropy).
#[derive(Debug, Clone)]
struct CmiPlan {
    ac: TracePlan,
    bc: TracePlan,
    abc: TracePlan,
    c: Option<TracePlan>,
}

impl CmiPlan {
    fn eval(&self, v: &[C64]) -> Result<f64> {
        let sac = self.ac.entropy(v)?;
        let sbc = self.bc.entropy(v)?;
        let sabc = self.abc.entropy(v)?;
        let sc = match &self.c {
            Some(p) => p.entropy(v)?,
            None => 0.0,
        };
        Ok(sac + sbc - sabc - sc)
    }
}

/// Precomputed evaluator for one instance.
pub(crate) struct TwoStageEval {
    enc_in_dim: usize,
    enc_out_dim: usize,
    dec_in_dim: usize,
    dec_out_dim: usize,
    /// source amplitudes reshaped with the encoder registers leading
    msrc: Vec<C64>,
    drest: usize,
    /// value = value_sign * ½ I(a:b|c) on the post-encoder state
    value_plan: CmiPlan,
    pub(crate) value_sign: f64,
    /// staging gather: (dec_in index, rest2 index) -> phi flat index
    dec_gather_in: Vec<usize>,
    dec_gather_rest: Vec<usize>,
    /// observable plan on the post-decoder state
    meas: TracePlan,
    delta: CMat,
    pub(crate) threshold: f64,
}

impl TwoStageEval {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        source: &QuantumState,
        enc_regs: &[String],
        enc_out: &SystemLayout,
        dec_take: &[String],
        dec_out: &SystemLayout,
        value_groups: (&[String], &[String], &[String]),
        value_sign: f64,
        measure_layout: &SystemLayout,
        delta: CMat,
        threshold: f64,
    ) -> Result<TwoStageEval> {
        let amps = source
            .amplitudes()
            .ok_or_else(|| Error::InvalidState("fast evaluator needs a pure source".into()))?;
        let enc_refs: Vec<&str> = enc_regs.iter().map(|s| s.as_str()).collect();
        let enc_sub = source.layout().subset(&enc_refs)?;
        if enc_sub.len() != enc_regs.len() {
            return Err(Error::Addressing("duplicate encoder registers".into()));
        }
        // permute source to [enc..., rest...]
        let rest_sub = source.layout().complement(&enc_refs)?;
        let enc_in_dim = enc_sub.total_dim();
        let drest = rest_sub.total_dim();
        let enc_off = offsets_for(source.layout(), &enc_sub);
        let rest_off = offsets_for(source.layout(), &rest_sub);
        // enc regs enumerated in enc_regs order
        let enc_order = SystemLayout::new(
            enc_regs
                .iter()
                .map(|n| Ok((n.clone(), source.layout().dim_of(n)?)))
                .collect::<Result<Vec<_>>>()?,
        )?;
        let enc_off_ordered = offsets_for(source.layout(), &enc_order);
        debug_assert_eq!(enc_off.len(), enc_off_ordered.len());
        let mut msrc = vec![czero(); enc_in_dim * drest];
        for (i, &eo) in enc_off_ordered.iter().enumerate() {
            for (r, &ro) in rest_off.iter().enumerate() {
                msrc[i * drest + r] = amps[eo + ro];
            }
        }

        let mut phi_layout = enc_out.clone();
        for (n, d) in rest_sub.registers() {
            phi_layout = phi_layout.concat(&SystemLayout::new(vec![(n.clone(), *d)])?)?;
        }

        let (ga, gb, gc) = value_groups;
        let (ga, gb, gc) = (ga.to_vec(), gb.to_vec(), gc.to_vec());
        fn join<'a>(xs: &'a [String], ys: &'a [String]) -> Vec<&'a str> {
            let mut out: Vec<&str> = xs.iter().map(|s| s.as_str()).collect();
            out.extend(ys.iter().map(|s| s.as_str()));
            out
        }
        let c_dim = gc
            .iter()
            .map(|n| phi_layout.dim_of(n))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .product::<usize>();
        let gab = join2(&ga, &gb);
        let value_plan = CmiPlan {
            ac: TracePlan::build_smaller_side(&phi_layout, &join(&ga, &gc))?,
            bc: TracePlan::build_smaller_side(&phi_layout, &join(&gb, &gc))?,
            abc: TracePlan::build_smaller_side(&phi_layout, &join(&gab, &gc))?,
            c: if c_dim == 1 {
                None
            } else {
                let gc_refs: Vec<&str> = gc.iter().map(|s| s.as_str()).collect();
                Some(TracePlan::build_smaller_side(&phi_layout, &gc_refs)?)
            },
        };

        // decoder gather plan
        let dec_refs: Vec<&str> = dec_take.iter().map(|s| s.as_str()).collect();
        let dec_sub_ordered = SystemLayout::new(
            dec_take
                .iter()
                .map(|n| Ok((n.clone(), phi_layout.dim_of(n)?)))
                .collect::<Result<Vec<_>>>()?,
        )?;
        let rest2_sub = phi_layout.complement(&dec_refs)?;
        let dec_gather_in = offsets_for(&phi_layout, &dec_sub_ordered);
        let dec_gather_rest = offsets_for(&phi_layout, &rest2_sub);
        let dec_in_dim = dec_sub_ordered.total_dim();

        let mut xi_layout = dec_out.clone();
        for (n, d) in rest2_sub.registers() {
            xi_layout = xi_layout.concat(&SystemLayout::new(vec![(n.clone(), *d)])?)?;
        }

        // measure plan: enumerate kept registers in the measure's order so
        // the contraction needs no extra permutation
        let meas_sub = SystemLayout::new(measure_layout.registers().to_vec())?;
        for (n, d) in meas_sub.registers() {
            if xi_layout.dim_of(n)? != *d {
                return Err(Error::Dimension(format!(
                    "measure register {n} has dim {} in the decoded state, expected {d}",
                    xi_layout.dim_of(n)?
                )));
            }
        }
        let meas = TracePlan {
            keep: offsets_for(&xi_layout, &meas_sub),
            tr: offsets_for(&xi_layout, &xi_layout.complement(&meas_sub.names())?),
        };

        Ok(TwoStageEval {
            enc_in_dim,
            enc_out_dim: enc_out.total_dim(),
            dec_in_dim,
            dec_out_dim: dec_out.total_dim(),
            msrc,
            drest,
            value_plan,
            value_sign,
            dec_gather_in,
            dec_gather_rest,
            meas,
            delta,
            threshold,
        })
    }

    pub(crate) fn n_enc_params(&self) -> usize {
        self.enc_out_dim * self.enc_out_dim
    }

    pub(crate) fn n_dec_params(&self) -> usize {
        self.dec_out_dim * self.dec_out_dim
    }

    pub(crate) fn n_params(&self) -> usize {
        self.n_enc_params() + self.n_dec_params()
    }

    fn enc_matrix(&self, pe: &[f64]) -> Result<CMat> {
        let g = crate::channels::generator_from_params(pe, self.enc_out_dim)?;
        Ok(linalg::expm(&g).columns(0, self.enc_in_dim).into_owned())
    }

    fn dec_matrix(&self, pd: &[f64]) -> Result<CMat> {
        let g = crate::channels::generator_from_params(pd, self.dec_out_dim)?;
        Ok(linalg::expm(&g).columns(0, self.dec_in_dim).into_owned())
    }

    /// Post-encoder amplitudes, flat row-major over [enc_out..., rest...].
    fn phi(&self, enc: &CMat) -> Vec<C64> {
        let mut out = vec![czero(); self.enc_out_dim * self.drest];
        for o in 0..self.enc_out_dim {
            for i in 0..self.enc_in_dim {
                let e = enc[(o, i)];
                if e.norm_sqr() == 0.0 {
                    continue;
                }
                let src = &self.msrc[i * self.drest..(i + 1) * self.drest];
                let dst = &mut out[o * self.drest..(o + 1) * self.drest];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += e * s;
                }
            }
        }
        out
    }

    fn value_of_phi(&self, phi: &[C64]) -> Result<f64> {
        Ok(self.value_sign * 0.5 * self.value_plan.eval(phi)?)
    }

    /// Post-decoder amplitudes, flat row-major over [dec_out..., rest2...].
    fn xi(&self, phi: &[C64], dec: &CMat) -> Vec<C64> {
        let din = self.dec_in_dim;
        let drest2 = self.dec_gather_rest.len();
        let mut staging = vec![czero(); din * drest2];
        for (zi, &zoff) in self.dec_gather_in.iter().enumerate() {
            let row = &mut staging[zi * drest2..(zi + 1) * drest2];
            for (r, &roff) in self.dec_gather_rest.iter().enumerate() {
                row[r] = phi[zoff + roff];
            }
        }
        let mut out = vec![czero(); self.dec_out_dim * drest2];
        for o in 0..self.dec_out_dim {
            for i in 0..din {
                let d = dec[(o, i)];
                if d.norm_sqr() == 0.0 {
                    continue;
                }
                let src = &staging[i * drest2..(i + 1) * drest2];
                let dst = &mut out[o * drest2..(o + 1) * drest2];
                for (x, s) in dst.iter_mut().zip(src) {
                    *x += d * s;
                }
            }
        }
        out
    }

    /// Tr(ρ_meas Δ) on the decoded state.
    fn raw_constraint(&self, xi: &[C64]) -> f64 {
        let dk = self.meas.keep.len();
        let dt = self.meas.tr.len();
        let mut acc = 0.0;
        for a in 0..dk {
            // diagonal contribution
            let mut rho_aa = 0.0;
            for t in 0..dt {
                rho_aa += xi[self.meas.keep[a] + self.meas.tr[t]].norm_sqr();
            }
            acc += rho_aa * self.delta[(a, a)].re;
            for b in (a + 1)..dk {
                let mut rho_ab = czero();
                for t in 0..dt {
                    rho_ab +=
                        xi[self.meas.keep[a] + self.meas.tr[t]] * xi[self.meas.keep[b] + self.meas.tr[t]].conj();
                }
                // Δ Hermitian: ρ_ab Δ_ba + ρ_ba Δ_ab = 2 Re(ρ_ab Δ_ba)
                acc += 2.0 * (rho_ab * self.delta[(b, a)]).re;
            }
        }
        acc
    }

    pub(crate) fn split<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        p.split_at(self.n_enc_params())
    }

    /// (value, raw constraint) with everything recomputed.
    pub(crate) fn eval_both(&self, p: &[f64]) -> Result<(f64, f64)> {
        let (pe, pd) = self.split(p);
        let enc = self.enc_matrix(pe)?;
        let phi = self.phi(&enc);
        let value = self.value_of_phi(&phi)?;
        let dec = self.dec_matrix(pd)?;
        let xi = self.xi(&phi, &dec);
        Ok((value, self.raw_constraint(&xi)))
    }
}

/// Penalty objective wrapper: violation = max(0, raw - threshold).
pub(crate) struct TwoStageObjective {
    pub(crate) eval: TwoStageEval,
}

impl TwoStageObjective {
    fn viol(&self, raw: f64) -> f64 {
        (raw - self.eval.threshold).max(0.0)
    }
}

impl PenaltyObjective for TwoStageObjective {
    fn n_params(&self) -> usize {
        self.eval.n_params()
    }

    fn eval(&self, p: &[f64]) -> (f64, f64) {
        match self.eval.eval_both(p) {
            Ok((v, raw)) => (v, self.viol(raw)),
            Err(_) => (f64::INFINITY, f64::INFINITY),
        }
    }

    fn gradient(&self, p: &[f64], s: Scalarization, h: f64, grad: &mut [f64]) -> usize {
        let ev = &self.eval;
        let (pe, pd) = ev.split(p);
        let (need_value, mu) = match s {
            Scalarization::Penalized { mu } => (true, mu),
            Scalarization::ViolationOnly => (false, 0.0),
        };
        let enc0 = match ev.enc_matrix(pe) {
            Ok(m) => m,
            Err(_) => {
                grad.fill(0.0);
                return 0;
            }
        };
        let dec0 = ev.dec_matrix(pd).expect("generator params are total");
        let phi0 = ev.phi(&enc0);

        let scalar_enc = |pe2: &[f64]| -> f64 {
            let enc = ev.enc_matrix(pe2).expect("total");
            let phi = ev.phi(&enc);
            let raw = ev.raw_constraint(&ev.xi(&phi, &dec0));
            let viol = self.viol(raw);
            match s {
                Scalarization::Penalized { .. } => {
                    let value = ev.value_of_phi(&phi).unwrap_or(f64::INFINITY);
                    value + mu * viol * viol
                }
                Scalarization::ViolationOnly => viol,
            }
        };
        let mut buf = pe.to_vec();
        for i in 0..pe.len() {
            let xi = pe[i];
            buf[i] = xi + h;
            let fp = scalar_enc(&buf);
            buf[i] = xi - h;
            let fm = scalar_enc(&buf);
            buf[i] = xi;
            grad[i] = (fp - fm) / (2.0 * h);
        }

        // decoder block: the value term is constant, only the constraint moves
        let scalar_dec = |pd2: &[f64]| -> f64 {
            let dec = ev.dec_matrix(pd2).expect("total");
            let raw = ev.raw_constraint(&ev.xi(&phi0, &dec));
            let viol = self.viol(raw);
            match s {
                Scalarization::Penalized { .. } => mu * viol * viol,
                Scalarization::ViolationOnly => viol,
            }
        };
        let mut buf = pd.to_vec();
        for j in 0..pd.len() {
            let xj = pd[j];
            buf[j] = xj + h;
            let fp = scalar_dec(&buf);
            buf[j] = xj - h;
            let fm = scalar_dec(&buf);
            buf[j] = xj;
            grad[pe.len() + j] = (fp - fm) / (2.0 * h);
        }
        let _ = need_value;
        2 * p.len()
    }
}

fn join2(a: &[String], b: &[String]) -> Vec<String> {
    let mut out = a.to_vec();
    out.extend_from_slice(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::schumacher_observable;
    use crate::rd::{objective, DimCaps, RDInstance};
    use crate::state::{max_entangled, QuantumState};
    use approx::assert_abs_diff_eq;

    fn bell_instance() -> RDInstance {
        let bell = max_entangled("A", "R", 2).unwrap();
        let b = QuantumState::basis(SystemLayout::of(&[("B", 1)]), 0).unwrap();
        let source = bell.tensor(&b).unwrap().permute(&["A", "B", "R"]).unwrap();
        let measure = schumacher_observable(&bell, &[("A", "Bout")]).unwrap();
        RDInstance::new(
            source,
            vec!["A".to_string()],
            vec!["B".to_string()],
            vec!["R".to_string()],
            measure,
            DimCaps { a_out: 1, b_out: 2, z: 2, w: 2, v: 2 },
        )
        .unwrap()
    }

    #[test]
    fn fast_eval_matches_reference_objective() {
        let inst = bell_instance();
        let fast = inst.fast_objective(0.0).unwrap();
        let param = inst.parameterization().unwrap();
        for k in 0..20 {
            let p: Vec<f64> = (0..param.n_params())
                .map(|i| ((i * 7 + k * 13) as f64 * 0.3).sin() * 0.8)
                .collect();
            let (v_fast, raw) = fast.eval.eval_both(&p).unwrap();
            let pair = param.build_pair(&p).unwrap();
            let (rate, dist) = objective(&pair, &inst).unwrap();
            assert_abs_diff_eq!(v_fast, rate, epsilon = 1e-10);
            assert_abs_diff_eq!(raw, dist, epsilon = 1e-10);
        }
    }

    #[test]
    fn split_gradient_matches_plain_differences() {
        let inst = bell_instance();
        let fast = inst.fast_objective(0.05).unwrap();
        let n = fast.n_params();
        let p: Vec<f64> = (0..n).map(|i| (i as f64 * 0.17).cos() * 0.5).collect();
        let s = Scalarization::Penalized { mu: 100.0 };
        let mut g_fast = vec![0.0; n];
        fast.gradient(&p, s, 1e-5, &mut g_fast);
        // reference: plain central differences on the folded scalar
        let mut g_ref = vec![0.0; n];
        let mut buf = p.clone();
        for i in 0..n {
            let xi = p[i];
            buf[i] = xi + 1e-5;
            let fp = fast.scalar(&buf, s);
            buf[i] = xi - 1e-5;
            let fm = fast.scalar(&buf, s);
            buf[i] = xi;
            g_ref[i] = (fp - fm) / 2e-5;
        }
        for i in 0..n {
            assert_abs_diff_eq!(g_fast[i], g_ref[i], epsilon = 1e-8);
        }
    }
}
