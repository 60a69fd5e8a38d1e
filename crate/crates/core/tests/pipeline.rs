use bandloc::disorder::{sample_phases, IndexRange, PhaseDistribution};
use bandloc::fuerstenberg::group_elements;
use bandloc::operator::{build_u_window, parse_window_csv, window_csv};
use bandloc::spectral::{eig_unitary, spectral_measure};
use bandloc::transfer::{lyapunov_sweep, LyapunovConfig};
use bandloc::{BandParameters, Exec};

#[test]
fn window_to_spectral_measure() {
    let p = BandParameters::new(0.6).unwrap();
    let range = IndexRange::new(-40, 39).unwrap();
    let omega = sample_phases(&PhaseDistribution::arc(1.0, 0.5).unwrap(), 9, range).unwrap();
    let w = build_u_window(&p, &omega, range, 0.2).unwrap();
    assert!(w.unitarity_defect() < 1e-13);

    let dec = eig_unitary(&w).unwrap();
    assert_eq!(dec.eigenphases.len(), 80);
    assert!(dec.residual < 1e-10);
    let mu = spectral_measure(&dec, 0).unwrap();
    assert!((mu.mass() - 1.0).abs() < 1e-12);
    // μ̂(1) = ⟨δ_0, U δ_0⟩
    assert!((mu.moment(1) - w.entry(0, 0)).norm() < 1e-12);
}

#[test]
fn csv_dump_reproduces_the_window() {
    let p = BandParameters::new(0.4).unwrap();
    let range = IndexRange::new(-6, 5).unwrap();
    let omega = sample_phases(&PhaseDistribution::uniform(), 2, range).unwrap();
    let w = build_u_window(&p, &omega, range, 0.0).unwrap();
    let entries = parse_window_csv(&window_csv(&w)).unwrap();
    assert_eq!(entries.len(), (0..w.size()).map(|i| w.row(i).len()).sum::<usize>());
    for (i, j, v) in entries {
        assert_eq!(v, w.entry(range.lo + i as i64, range.lo + j as i64));
    }
}

#[test]
fn sweep_is_identical_in_both_modes() {
    let p = BandParameters::new(0.5).unwrap();
    let nu = PhaseDistribution::uniform();
    let cfg = LyapunovConfig::new(500, 3, 4);
    let a = lyapunov_sweep(&nu, &p, &[0.0, 2.0], &cfg, Exec::Sequential).unwrap();
    let b = lyapunov_sweep(&nu, &p, &[0.0, 2.0], &cfg, Exec::Parallel).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|x| x.forward.gamma_hat > 0.0));
}

#[test]
fn certificate_for_distinct_phases() {
    let p = BandParameters::new(0.5).unwrap();
    let c = group_elements(0.0, 2.5, &p).unwrap();
    assert!(c.noncompact_witnessed);
    assert!((c.trace_k - c.trace_k_formula).abs() < 1e-9 * c.trace_k);
}
