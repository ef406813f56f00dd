// timing probe (not part of the crate)
use qrdw::distortion::schumacher_observable;
use qrdw::layout::SystemLayout;
use qrdw::linalg::{c, CVec};
use qrdw::rd::{self, DimCaps, RDInstance};
use qrdw::state::{max_entangled, QuantumState};
use std::time::Instant;

fn bell_instance(z: usize) -> RDInstance {
    let bell = max_entangled("A", "R", 2).unwrap();
    let b = QuantumState::basis(SystemLayout::of(&[("B", 1)]), 0).unwrap();
    let source = bell.tensor(&b).unwrap().permute(&["A", "B", "R"]).unwrap();
    let measure = schumacher_observable(&bell, &[("A", "Bout")]).unwrap();
    RDInstance::new(
        source,
        vec!["A".into()], vec!["B".into()], vec!["R".into()],
        measure,
        DimCaps { a_out: 1, b_out: 2, z, w: 2, v: 2 },
    ).unwrap()
}

fn ghz_qsr_instance() -> RDInstance {
    // GHZ on A,B,R; QSR with trivial C: decoder outputs Bout = (Ahat,Bhat)
    let layout = SystemLayout::of(&[("A", 2), ("B", 2), ("R", 2)]);
    let mut v = CVec::zeros(8);
    v[0] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    v[7] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let ghz = QuantumState::pure(layout, v).unwrap();
    // observable 1 - psi over [Bout(=A,B fused), R]
    let fused = ghz.permute(&["A", "B", "R"]).unwrap().fuse(&["A", "B"], "AB").unwrap();
    let measure = schumacher_observable(&fused, &[("AB", "Bout")]).unwrap();
    RDInstance::new(
        ghz,
        vec!["A".into()], vec!["B".into()], vec!["R".into()],
        measure,
        DimCaps { a_out: 1, b_out: 4, z: 2, w: 2, v: 2 },
    ).unwrap()
}

fn product_instance() -> RDInstance {
    let a = QuantumState::basis(SystemLayout::of(&[("A", 2)]), 0).unwrap();
    let r = QuantumState::basis(SystemLayout::of(&[("R", 2)]), 1).unwrap();
    let b = QuantumState::basis(SystemLayout::of(&[("B", 1)]), 0).unwrap();
    let source = a.tensor(&b).unwrap().tensor(&r).unwrap();
    let ar = a.tensor(&r).unwrap();
    let measure = schumacher_observable(&ar, &[("A", "Bout")]).unwrap();
    RDInstance::new(
        source,
        vec!["A".into()], vec!["B".into()], vec!["R".into()],
        measure,
        DimCaps { a_out: 1, b_out: 2, z: 2, w: 2, v: 2 },
    ).unwrap()
}

fn main() {
    let inst = bell_instance(2);
    let t = Instant::now();
    let (pt, _) = rd::estimate_qprime_with_code(&inst, 0.0, 32, 7, 1e-6).unwrap();
    println!("bell D=0, 32 restarts: {:?} rate={:.6} dist={:.2e} feas={}", t.elapsed(), pt.rate_bound, pt.distortion_achieved, pt.feasible);

    let t = Instant::now();
    let (pt, _) = rd::estimate_qprime_with_code(&inst, 0.001, 32, 7, 1e-6).unwrap();
    println!("bell D=0.001: {:?} rate={:.6} dist={:.2e} feas={}", t.elapsed(), pt.rate_bound, pt.distortion_achieved, pt.feasible);

    let ghz = ghz_qsr_instance();
    let t = Instant::now();
    let (pt, _) = rd::estimate_qprime_with_code(&ghz, 0.0, 32, 7, 1e-6).unwrap();
    println!("ghz D=0, 32 restarts: {:?} rate={:.6} dist={:.2e} feas={}", t.elapsed(), pt.rate_bound, pt.distortion_achieved, pt.feasible);

    let prod = product_instance();
    let t = Instant::now();
    let (pt, _) = rd::estimate_qprime_with_code(&prod, 0.0, 8, 7, 1e-6).unwrap();
    println!("product D=0: {:?} rate={:.2e} dist={:.2e} feas={}", t.elapsed(), pt.rate_bound, pt.distortion_achieved, pt.feasible);

    // D >= lambda_max: rate must drop to <= 1e-6
    let t = Instant::now();
    let (pt, _) = rd::estimate_qprime_with_code(&inst, 1.0, 8, 7, 1e-6).unwrap();
    println!("bell D=1.0: {:?} rate={:.2e} dist={:.2e} feas={}", t.elapsed(), pt.rate_bound, pt.distortion_achieved, pt.feasible);

    // sweep
    let t = Instant::now();
    let curve = rd::sweep_curve(&inst, &[0.0, 0.05, 0.1, 0.3, 0.5], 16, 7, 1e-6).unwrap();
    println!("sweep 5pts x16 restarts: {:?} d0={:.2e}", t.elapsed(), curve.d0_estimate);
    for p in &curve.points {
        println!("  D={:.3} rate={:.6} feas={} ts={}", p.d_target, p.rate_bound, p.feasible, p.timeshared);
    }
}
