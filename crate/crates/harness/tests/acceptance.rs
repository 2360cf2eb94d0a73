//! Runs every acceptance check at its default tolerance and prints one line per check.

use std::process::ExitCode;

use ropegrad::verify::{run_verify, Check, ScalingConfig, Tolerances, VerifyConfig};

fn defaults_are_the_acceptance_numbers() {
    let t = Tolerances::default();
    assert_eq!(t.identity, 1e-12);
    assert_eq!(t.oracle, 1e-10);
    assert_eq!((t.finite_diff, t.fd_step), (1e-5, 1e-5));
    assert_eq!(t.s_fidelity, 1e-3);
    assert_eq!(t.contract, 1e-9);
    assert_eq!(t.end_to_end, 1e-2);
    assert_eq!((t.fast_slope_max, t.exact_slope_min), (1.35, 1.7));
    assert_eq!((t.degenerate, t.approx_budget), (1e-12, 1e-2));
    assert_eq!(
        (t.fft_round_trip, t.parseval, t.correlation),
        (1e-12, 1e-10, 1e-10)
    );

    let s = ScalingConfig::default();
    assert_eq!(s.fast_n_list, [512, 1024, 2048, 4096, 8192]);
    assert_eq!(s.exact_n_list, [512, 1024, 2048]);
    assert_eq!((s.d, s.repeat), (4, 5));
    assert!(VerifyConfig::default().enforce_runtime);
}

fn main() -> ExitCode {
    defaults_are_the_acceptance_numbers();
    let report =
        run_verify(&VerifyConfig::default(), |r| println!("{r}")).expect("default config is valid");
    assert_eq!(report.results.len(), Check::ALL.len());
    let passed = report.results.iter().filter(|r| r.pass).count();
    println!("acceptance: {passed}/{} passed", report.results.len());
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
