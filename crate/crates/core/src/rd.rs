//! Rate-distortion estimation: upper bounds on Q'(D) at a capped message
//! dimension, the minimum-distortion point D0, swept curves with a convex
//! lower envelope, and the analytic converse bands.
//!
//! Every reported (D, rate) is witnessed by a concrete encoder/decoder
//! pair: sweep points that sit above the envelope are replaced by
//! explicit time-sharing codes rather than bare hull values. Because the
//! message register is capped, all rates are upper bounds relative to the
//! cap, which is recorded on every point.

use serde::{Deserialize, Serialize};

use crate::channels::{run_code, timeshare, ChannelMap, CodePair, IsometryMap};
use crate::distortion::DistortionMeasure;
use crate::entropics::{cond_mutual_info, g_func, log2};
use crate::layout::SystemLayout;
use crate::optimize::{multistart_minimize, PenaltyOptions};
use crate::state::QuantumState;
use crate::{Error, Result};

/// Dimension caps for the encoder/decoder parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimCaps {
    pub a_out: usize,
    pub b_out: usize,
    pub z: usize,
    pub w: usize,
    pub v: usize,
}

impl DimCaps {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_out", self.a_out),
            ("b_out", self.b_out),
            ("z", self.z),
            ("w", self.w),
            ("v", self.v),
        ] {
            if v < 1 {
                return Err(Error::InvalidArgument(format!("cap {name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// A rate-distortion problem instance: a pure source whose registers are
/// split into the encoder's registers, the decoder-side information, and
/// the passive reference, plus a distortion measure over the decoded
/// output registers (Aout, Bout, reference...).
#[derive(Debug, Clone)]
pub struct RDInstance {
    pub source: QuantumState,
    pub enc_regs: Vec<String>,
    pub side_regs: Vec<String>,
    pub ref_regs: Vec<String>,
    pub measure: DistortionMeasure,
    pub caps: DimCaps,
}

impl RDInstance {
    pub fn new(
        source: QuantumState,
        enc_regs: Vec<String>,
        side_regs: Vec<String>,
        ref_regs: Vec<String>,
        measure: DistortionMeasure,
        caps: DimCaps,
    ) -> Result<Self> {
        if !source.is_pure_form() {
            return Err(Error::InvalidState("rate-distortion source must be pure".into()));
        }
        caps.validate()?;
        let mut all: Vec<&String> = enc_regs.iter().chain(&side_regs).chain(&ref_regs).collect();
        all.sort();
        all.dedup();
        if all.len() != source.layout().len()
            || enc_regs.len() + side_regs.len() + ref_regs.len() != source.layout().len()
        {
            return Err(Error::Addressing(
                "enc/side/ref registers must partition the source".into(),
            ));
        }
        for r in &all {
            source.layout().position(r)?;
        }
        if enc_regs.is_empty() || ref_regs.is_empty() {
            return Err(Error::Addressing(
                "need at least one encoder and one reference register".into(),
            ));
        }
        let inst = RDInstance { source, enc_regs, side_regs, ref_regs, measure, caps };
        inst.parameterization()?; // validate cap arithmetic eagerly
        Ok(inst)
    }

    fn reg_dims(&self, names: &[String]) -> Result<Vec<(String, usize)>> {
        names
            .iter()
            .map(|n| Ok((n.clone(), self.source.layout().dim_of(n)?)))
            .collect()
    }

    pub fn enc_dim(&self) -> usize {
        self.enc_regs
            .iter()
            .map(|n| self.source.layout().dim_of(n).expect("validated"))
            .product()
    }

    pub fn side_dim(&self) -> usize {
        self.side_regs
            .iter()
            .map(|n| self.source.layout().dim_of(n).expect("validated"))
            .product()
    }

    pub fn ref_dim(&self) -> usize {
        self.ref_regs
            .iter()
            .map(|n| self.source.layout().dim_of(n).expect("validated"))
            .product()
    }

    /// Encoder/decoder layouts under the caps.
    pub fn parameterization(&self) -> Result<Parameterization> {
        let enc_in = SystemLayout::new(self.reg_dims(&self.enc_regs)?)?;
        let enc_out = SystemLayout::new(vec![
            ("Aout".to_string(), self.caps.a_out),
            ("Z".to_string(), self.caps.z),
            ("W".to_string(), self.caps.w),
        ])?;
        if enc_out.total_dim() < enc_in.total_dim() {
            return Err(Error::Dimension(format!(
                "encoder caps too small: {} < {}",
                enc_out.total_dim(),
                enc_in.total_dim()
            )));
        }
        let mut dec_in_regs = vec![("Z".to_string(), self.caps.z)];
        dec_in_regs.extend(self.reg_dims(&self.side_regs)?);
        let dec_in = SystemLayout::new(dec_in_regs)?;
        let dec_out = SystemLayout::new(vec![
            ("Bout".to_string(), self.caps.b_out),
            ("V".to_string(), self.caps.v),
        ])?;
        if dec_out.total_dim() < dec_in.total_dim() {
            return Err(Error::Dimension(format!(
                "decoder caps too small: {} < {}",
                dec_out.total_dim(),
                dec_in.total_dim()
            )));
        }
        Ok(Parameterization { enc_in, enc_out, dec_in, dec_out })
    }
}

impl RDInstance {
    /// Fast objective for observable measures: precomputed index plans,
    /// split-aware gradients. Falls back to an error for functional
    /// measures (callers then use the generic closure path).
    pub(crate) fn fast_objective(&self, d_target: f64) -> Result<crate::fasteval::TwoStageObjective> {
        let obs = self
            .measure
            .as_observable()
            .ok_or_else(|| Error::InvalidArgument("functional measure has no fast path".into()))?;
        let param = self.parameterization()?;
        let mut dec_take = vec!["Z".to_string()];
        dec_take.extend(self.side_regs.iter().cloned());
        let eval = crate::fasteval::TwoStageEval::new(
            &self.source,
            &self.enc_regs,
            &param.enc_out,
            &dec_take,
            &param.dec_out,
            (&["Z".to_string()], &self.ref_regs, &self.side_regs),
            1.0,
            obs.layout(),
            obs.matrix().clone(),
            d_target,
        )?;
        Ok(crate::fasteval::TwoStageObjective { eval })
    }
}

/// The concrete isometry search space for an instance.
#[derive(Debug, Clone)]
pub struct Parameterization {
    pub enc_in: SystemLayout,
    pub enc_out: SystemLayout,
    pub dec_in: SystemLayout,
    pub dec_out: SystemLayout,
}

impl Parameterization {
    pub fn n_enc_params(&self) -> usize {
        let d = self.enc_out.total_dim();
        d * d
    }

    pub fn n_dec_params(&self) -> usize {
        let d = self.dec_out.total_dim();
        d * d
    }

    pub fn n_params(&self) -> usize {
        self.n_enc_params() + self.n_dec_params()
    }

    /// Materialize the code pair for a parameter vector.
    pub fn build_pair(&self, params: &[f64]) -> Result<CodePair> {
        if params.len() != self.n_params() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let (pe, pd) = params.split_at(self.n_enc_params());
        let enc = IsometryMap::from_params(pe, self.enc_in.clone(), self.enc_out.clone())?;
        let dec = IsometryMap::from_params(pd, self.dec_in.clone(), self.dec_out.clone())?;
        CodePair::new(
            ChannelMap::new(enc, vec!["W".to_string()])?,
            ChannelMap::new(dec, vec!["V".to_string()])?,
            "Z",
        )
    }
}

/// Rate and distortion of a code pair on an instance: the rate is
/// ½ I(Z : ref | side) on the post-encoder state, the distortion is the
/// measure evaluated on the decoded state.
pub fn objective(pair: &CodePair, instance: &RDInstance) -> Result<(f64, f64)> {
    if pair.z_dim() > instance.caps.z * 2 {
        // time-shared pairs carry one flag doubling; anything beyond that
        // exceeds the declared cap
        return Err(Error::Dimension(format!(
            "pair message dim {} exceeds cap {}",
            pair.z_dim(),
            instance.caps.z
        )));
    }
    let run = run_code(pair, &instance.source)?;
    let refs: Vec<&str> = instance.ref_regs.iter().map(|s| s.as_str()).collect();
    let side: Vec<&str> = instance.side_regs.iter().map(|s| s.as_str()).collect();
    let rate = 0.5 * cond_mutual_info(&run.phi, &[pair.z_name.as_str()], &refs, &side)?;
    let distortion = instance.measure.evaluate(&run.xi)?;
    Ok((rate, distortion))
}

/// One estimated point of the rate-distortion trade-off.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RDPoint {
    pub d_target: f64,
    /// Upper bound on Q'(D) at the message cap; +∞ when no restart found
    /// a feasible pair (serialized as null downstream).
    pub rate_bound: f64,
    pub distortion_achieved: f64,
    pub feasible: bool,
    pub restarts_used: usize,
    pub seed: u64,
    pub z_cap: usize,
    /// Set when the point is witnessed by an explicit time-sharing code.
    pub timeshared: bool,
}

/// A swept curve with its convex lower envelope and D0 estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RDCurve {
    pub points: Vec<RDPoint>,
    pub envelope: Vec<(f64, f64)>,
    pub d0_estimate: f64,
}

impl RDCurve {
    /// Envelope convexity/monotonicity and envelope-below-points checks.
    pub fn validate(&self) -> Result<()> {
        let tol = 1e-9;
        for w in self.envelope.windows(2) {
            if w[1].1 > w[0].1 + tol {
                return Err(Error::Numerical(format!(
                    "envelope increases from {:?} to {:?}",
                    w[0], w[1]
                )));
            }
        }
        for w in self.envelope.windows(3) {
            let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
            if s2 + tol < s1 {
                return Err(Error::Numerical("envelope is not convex".into()));
            }
        }
        for p in self.points.iter().filter(|p| p.feasible) {
            if let Some(env) = envelope_value(&self.envelope, p.d_target) {
                if env > p.rate_bound + tol {
                    return Err(Error::Numerical(format!(
                        "envelope {} above point {} at D = {}",
                        env, p.rate_bound, p.d_target
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Piecewise-linear envelope value at d (None outside the hull range).
pub fn envelope_value(envelope: &[(f64, f64)], d: f64) -> Option<f64> {
    if envelope.is_empty() || d < envelope[0].0 - 1e-12 {
        return None;
    }
    if d >= envelope.last().unwrap().0 {
        return Some(envelope.last().unwrap().1);
    }
    for w in envelope.windows(2) {
        if d >= w[0].0 - 1e-12 && d <= w[1].0 + 1e-12 {
            let t = (d - w[0].0) / (w[1].0 - w[0].0);
            return Some(w[0].1 + t * (w[1].1 - w[0].1));
        }
    }
    None
}

fn solver_options(feastol: f64) -> PenaltyOptions {
    PenaltyOptions { feastol, ..Default::default() }
}

/// Estimate Q'(D): penalized multi-restart minimization of the rate under
/// the distortion constraint. Returns the point plus the witnessing pair.
pub fn estimate_qprime_with_code(
    instance: &RDInstance,
    d_target: f64,
    restarts: usize,
    seed: u64,
    feastol: f64,
) -> Result<(RDPoint, Option<CodePair>)> {
    if d_target < 0.0 {
        return Err(Error::InvalidArgument("D target must be >= 0".into()));
    }
    let param = instance.parameterization()?;
    let opts = solver_options(feastol);
    let out = match instance.fast_objective(d_target) {
        Ok(fast) => crate::optimize::multistart(&fast, restarts, seed, &opts),
        Err(_) => {
            let obj =
                |p: &[f64]| match param.build_pair(p).and_then(|pair| objective(&pair, instance)) {
                    Ok((rate, dist)) => (rate, (dist - d_target).max(0.0)),
                    Err(_) => (f64::INFINITY, f64::INFINITY),
                };
            multistart_minimize(obj, param.n_params(), restarts, seed, &opts)
        }
    };
    let pair = param.build_pair(&out.best.params)?;
    let (rate, dist) = objective(&pair, instance)?;
    let feasible = dist <= d_target + feastol;
    let point = RDPoint {
        d_target,
        rate_bound: if feasible { rate.max(0.0) } else { f64::INFINITY },
        distortion_achieved: dist,
        feasible,
        restarts_used: restarts,
        seed,
        z_cap: instance.caps.z,
        timeshared: false,
    };
    Ok((point, if feasible { Some(pair) } else { None }))
}

/// Estimate Q'(D) (point only).
pub fn estimate_qprime(
    instance: &RDInstance,
    d_target: f64,
    restarts: usize,
    seed: u64,
    feastol: f64,
) -> Result<RDPoint> {
    Ok(estimate_qprime_with_code(instance, d_target, restarts, seed, feastol)?.0)
}

/// Minimum distortion reachable in the capped code space: an upper bound
/// on D0, deterministic in the seed.
pub fn estimate_d0(instance: &RDInstance, restarts: usize, seed: u64) -> Result<f64> {
    let opts = PenaltyOptions::default();
    match instance.fast_objective(0.0) {
        Ok(fast) => {
            // with a zero threshold the violation is the raw distortion
            let out = crate::optimize::multistart_min_violation(&fast, restarts, seed, &opts);
            let pair = instance.parameterization()?.build_pair(&out.best.params)?;
            let (_, dist) = objective(&pair, instance)?;
            Ok(dist)
        }
        Err(_) => {
            let param = instance.parameterization()?;
            let obj =
                |p: &[f64]| match param.build_pair(p).and_then(|pair| objective(&pair, instance)) {
                    Ok((_, dist)) => (0.0, dist),
                    Err(_) => (0.0, f64::INFINITY),
                };
            let fnobj = crate::optimize::FnObjective { f: obj, n: param.n_params() };
            let out = crate::optimize::multistart_min_violation(&fnobj, restarts, seed, &opts);
            Ok(out.best.violation)
        }
    }
}

/// Sweep a distortion grid. Feasible codes found at smaller D are carried
/// forward when they beat a later point (they stay feasible there), the
/// lower convex envelope is computed over the feasible points, and raw
/// points above the envelope are replaced by explicit time-sharing codes.
pub fn sweep_curve(
    instance: &RDInstance,
    d_grid: &[f64],
    restarts: usize,
    seed: u64,
    feastol: f64,
) -> Result<RDCurve> {
    if d_grid.is_empty() {
        return Err(Error::InvalidArgument("empty distortion grid".into()));
    }
    for w in d_grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidArgument(
                "distortion grid must be strictly ascending".into(),
            ));
        }
    }
    let mut points = Vec::with_capacity(d_grid.len());
    let mut pairs: Vec<Option<CodePair>> = Vec::with_capacity(d_grid.len());
    for &d in d_grid {
        let (pt, pair) = estimate_qprime_with_code(instance, d, restarts, seed, feastol)?;
        points.push(pt);
        pairs.push(pair);
    }

    // Carry better codes from smaller D forward: they remain feasible.
    for j in 1..points.len() {
        let (left, right) = points.split_at_mut(j);
        let best_prev = left
            .iter()
            .enumerate()
            .filter(|(_, p)| p.feasible)
            .min_by(|a, b| a.1.rate_bound.partial_cmp(&b.1.rate_bound).unwrap());
        if let Some((i, prev)) = best_prev {
            let cur = &mut right[0];
            if prev.rate_bound < cur.rate_bound {
                cur.rate_bound = prev.rate_bound;
                cur.distortion_achieved = prev.distortion_achieved;
                cur.feasible = true;
                pairs[j] = pairs[i].clone();
            }
        }
    }

    // Lower convex hull over feasible points.
    let feas: Vec<(usize, f64, f64)> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.feasible)
        .map(|(i, p)| (i, p.d_target, p.rate_bound))
        .collect();
    let mut hull: Vec<(usize, f64, f64)> = Vec::new();
    for &(i, d, r) in &feas {
        while hull.len() >= 2 {
            let (_, d1, r1) = hull[hull.len() - 2];
            let (_, d2, r2) = hull[hull.len() - 1];
            let s12 = (r2 - r1) / (d2 - d1);
            let s2n = (r - r2) / (d - d2);
            if s12 >= s2n - 1e-12 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push((i, d, r));
    }
    let envelope: Vec<(f64, f64)> = hull.iter().map(|&(_, d, r)| (d, r)).collect();

    // Replace raw points strictly above the envelope by explicit
    // time-sharing codes between the bracketing hull vertices.
    for j in 0..points.len() {
        if !points[j].feasible {
            continue;
        }
        let d = points[j].d_target;
        let Some(env) = envelope_value(&envelope, d) else { continue };
        if points[j].rate_bound <= env + 1e-9 {
            continue;
        }
        let bracket = envelope.windows(2).find(|w| d >= w[0].0 && d <= w[1].0);
        let Some(w) = bracket else { continue };
        let ia = hull.iter().find(|h| h.1 == w[0].0).unwrap().0;
        let ib = hull.iter().find(|h| h.1 == w[1].0).unwrap().0;
        let (Some(pa), Some(pb)) = (&pairs[ia], &pairs[ib]) else { continue };
        // p·D_a + (1-p)·D_b = d
        let p = (w[1].0 - d) / (w[1].0 - w[0].0);
        let ts = timeshare(pa, pb, p)?;
        let (rate, dist) = objective(&ts, instance)?;
        if dist <= d + feastol {
            points[j].rate_bound = rate.max(0.0);
            points[j].distortion_achieved = dist;
            points[j].timeshared = true;
            points[j].z_cap = ts.z_dim();
            pairs[j] = Some(ts);
        }
    }

    let d0_estimate = estimate_d0(instance, restarts, seed)?;
    let curve = RDCurve { points, envelope, d0_estimate };
    curve.validate()?;
    Ok(curve)
}

/// Converse band for side-information-free instances:
/// ½ I(A:R) - 2√D log|R| - g(√D), clamped at zero.
pub fn schumacher_lower_band(instance: &RDInstance, d: f64) -> Result<f64> {
    if instance.side_dim() != 1 {
        return Err(Error::InvalidArgument(
            "band requires trivial decoder side information".into(),
        ));
    }
    qsr_lower_band(instance, d)
}

/// Converse band with side information: ½ I(A:R|B) - 2√D log|R| - g(√D),
/// clamped at zero. Coincides with the side-information-free band when B
/// is trivial.
pub fn qsr_lower_band(instance: &RDInstance, d: f64) -> Result<f64> {
    if d < 0.0 {
        return Err(Error::InvalidArgument("D must be >= 0".into()));
    }
    let sd = d.sqrt();
    let band = source_cmi_half(instance)?
        - 2.0 * sd * log2(instance.ref_dim() as f64)
        - g_func(sd)?;
    Ok(band.max(0.0))
}

/// ½ I(A:R|B) of the source itself (the D→0 rate target).
pub fn source_cmi_half(instance: &RDInstance) -> Result<f64> {
    let enc: Vec<&str> = instance.enc_regs.iter().map(|s| s.as_str()).collect();
    let refs: Vec<&str> = instance.ref_regs.iter().map(|s| s.as_str()).collect();
    let side: Vec<&str> = instance.side_regs.iter().map(|s| s.as_str()).collect();
    Ok(0.5 * cond_mutual_info(&instance.source, &enc, &refs, &side)?)
}

/// Zero-generator code: a deterministic reference point on any instance.
pub fn zero_code(instance: &RDInstance) -> Result<CodePair> {
    let param = instance.parameterization()?;
    param.build_pair(&vec![0.0; param.n_params()])
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::distortion::schumacher_observable;
    use crate::state::max_entangled;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_code_objective_on_bell() {
        let inst = bell_schumacher_instance(2);
        let pair = identity_code(&inst);
        let (rate, dist) = objective(&pair, &inst).unwrap();
        assert_abs_diff_eq!(rate, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(dist, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn trivial_message_register_gives_zero_rate() {
        let bell = max_entangled("A", "R", 2).unwrap();
        let b = QuantumState::basis(SystemLayout::of(&[("B", 1)]), 0).unwrap();
        let source = bell.tensor(&b).unwrap().permute(&["A", "B", "R"]).unwrap();
        let measure = schumacher_observable(&bell, &[("A", "Bout")]).unwrap();
        let inst = RDInstance::new(
            source,
            vec!["A".to_string()],
            vec!["B".to_string()],
            vec!["R".to_string()],
            measure,
            DimCaps { a_out: 1, b_out: 2, z: 1, w: 2, v: 2 },
        )
        .unwrap();
        let pair = zero_code(&inst).unwrap();
        let (rate, _) = objective(&pair, &inst).unwrap();
        assert_abs_diff_eq!(rate, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn bands_evaluate_and_clamp() {
        let inst = bell_schumacher_instance(2);
        // D = 0: band is ½ I(A:R) = 1
        assert_abs_diff_eq!(schumacher_lower_band(&inst, 0.0).unwrap(), 1.0, epsilon = 1e-10);
        // formula evaluation at D = 0.001, frozen from direct computation
        let d = 0.001f64;
        let sd = d.sqrt();
        let byhand = 1.0 - 2.0 * sd * 1.0 - g_func(sd).unwrap();
        let band = schumacher_lower_band(&inst, d).unwrap();
        assert_abs_diff_eq!(band, byhand, epsilon = 1e-12);
        assert_abs_diff_eq!(band, 0.732846, epsilon = 1e-5);
        // large D clamps to zero
        assert_abs_diff_eq!(schumacher_lower_band(&inst, 0.9).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn envelope_interpolation() {
        let env = vec![(0.0, 1.0), (0.5, 0.0)];
        assert_abs_diff_eq!(envelope_value(&env, 0.25).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(envelope_value(&env, 0.9).unwrap(), 0.0, epsilon = 1e-12);
        assert!(envelope_value(&env, -0.1).is_none());
    }
}
