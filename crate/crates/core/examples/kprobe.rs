// K estimator probe
use qrdw::distortion::EnsembleSource;
use qrdw::kfun::{self, KCaps, KInstance};
use qrdw::layout::SystemLayout;
use qrdw::linalg::{c, CVec};
use qrdw::state::QuantumState;
use std::time::Instant;

fn ens(second: &str) -> EnsembleSource {
    let layout = SystemLayout::of(&[("A", 2), ("C", 1), ("B", 1), ("Rp", 1)]);
    let zero = QuantumState::basis(layout.clone(), 0).unwrap();
    let other = match second {
        "one" => QuantumState::basis(layout, 1).unwrap(),
        _ => QuantumState::pure(
            layout,
            CVec::from_vec(vec![
                c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            ]),
        )
        .unwrap(),
    };
    EnsembleSource::new(vec![0.5, 0.5], vec![zero, other]).unwrap()
}

fn main() {
    let orth = KInstance::new(ens("one"), KCaps { z: 2, w: 2, v: 2 }).unwrap();
    let t = Instant::now();
    let pt = kfun::estimate_k(&orth, 0.0, 32, 7, 1e-6).unwrap();
    println!("orth D=0 32r: {:?} k_raw={:.6} fid={:.9} feas={}", t.elapsed(), pt.k_raw, pt.fidelity_achieved, pt.feasible);

    let irr = KInstance::new(ens("plus"), KCaps { z: 2, w: 2, v: 2 }).unwrap();
    let t = Instant::now();
    let pt = kfun::estimate_k(&irr, 0.0, 32, 7, 1e-6).unwrap();
    println!("irr  D=0 32r: {:?} k_raw={:.6} fid={:.9} feas={}", t.elapsed(), pt.k_raw, pt.fidelity_achieved, pt.feasible);

    // monotonicity spot
    let p1 = kfun::estimate_k(&orth, 0.1, 16, 7, 1e-6).unwrap();
    println!("orth D=0.1: k_raw={:.6} fid={:.6} feas={}", p1.k_raw, p1.fidelity_achieved, p1.feasible);

    // random feasible pair at D=0.01 + decoupling
    let t = Instant::now();
    let (u, ut) = kfun::random_feasible_pair(&orth, 0.01, 5).unwrap();
    let rep = kfun::decoupling_check(&orth, &u, &ut, 0.01).unwrap();
    println!("decoupling: {:?} lhs={:.4e} bound={:.4} ok={} cubic {} fid={:.6}", t.elapsed(), rep.lhs, rep.bound, rep.ok, rep.cubic_ok, rep.fidelity);
}
