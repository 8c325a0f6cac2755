use certkit::cv::{exact_fidelity, CvState};
use certkit::fidelity::{fidelity_by_enumeration, plan_budget};
use certkit::measure::{prepare_sigma, ExpectationBackend, NoiseSpec};
use certkit::pauli::PauliString;
use certkit::process::{average_fidelity, choi_fidelity, ChannelModel};
use certkit::state::{make_ghz, make_w};
use certkit::C64;

#[test]
fn ghz_under_global_depolarizing() {
    for n in 2..=6 {
        let ghz = make_ghz(n).unwrap();
        let sigma = prepare_sigma(&ghz, &NoiseSpec::GlobalDepolarizing(0.2)).unwrap();
        let f = fidelity_by_enumeration(&ghz, &sigma).unwrap();
        let want = 0.8 + 0.2 / (1u64 << n) as f64;
        assert!((f - want).abs() < 1e-12, "n={n}: {f}");
    }
}

#[test]
fn cnot_under_local_depolarizing() {
    let cnot: ChannelModel = "cnot".parse().unwrap();
    let noisy = cnot.clone().then(ChannelModel::noise(2, NoiseSpec::LocalDepolarizing(0.1)).unwrap()).unwrap();
    let f = choi_fidelity(&cnot, &noisy).unwrap();
    assert!((f - 0.855625).abs() < 1e-12, "{f}");
    assert!((average_fidelity(f, 4) - (4.0 * 0.855625 + 1.0) / 5.0).abs() < 1e-12);
}

#[test]
fn cat_against_its_mixture() {
    for a in [1.0, 2.0, 3.0] {
        let alpha = C64::new(a, 0.0);
        let f = exact_fidelity(&CvState::Cat(alpha), &CvState::Mixture(alpha)).unwrap();
        let want = 0.5 * (1.0 + (-2.0 * a * a).exp());
        assert!((f - want).abs() < 1e-9, "alpha={a}: {f}");
    }
}

#[test]
fn w_state_characteristic_values() {
    let w = make_w(3).unwrap();
    for (p, want) in [("ZZZ", -1.0), ("XXI", 2.0 / 3.0), ("ZII", 1.0 / 3.0), ("XYZ", 0.0)] {
        let v = w.exact_expectation(&p.parse::<PauliString>().unwrap()).unwrap();
        assert!((v - want).abs() < 1e-12, "{p}: {v}");
    }
}

#[test]
fn default_budget() {
    let b = plan_budget(&make_ghz(4).unwrap(), 0.1, 0.1).unwrap();
    assert_eq!((b.eps1, b.eps2, b.n1), (0.05, 0.05, 8000));
}
