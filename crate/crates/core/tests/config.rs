use proptest::prelude::*;

use siplab::dynamics::InitialProfile;
use siplab::fields::TestFunction;
use siplab::harness::{ExperimentConfig, ExperimentKind, SimSection, SCHEMA_VERSION};
use siplab::kernel::KernelSpec;
use siplab::Error;

fn kind() -> impl Strategy<Value = ExperimentKind> {
    prop_oneof![Just(ExperimentKind::Hydro), Just(ExperimentKind::NonEqFluct), Just(ExperimentKind::MoscoCheck)]
}

prop_compose! {
    fn config()(
        kind in kind(),
        seed in any::<u64>(),
        replicas in 1usize..5000,
        start in 1usize..6,
        steps in 1usize..4,
        beta in 0.1f64..1.9,
        alpha in 0.1f64..5.0,
        horizon in 0.01f64..2.0,
        amp in 0.0f64..3.0,
        width in 0.01f64..0.3,
        center in 0.0f64..1.0,
        mode in 1i64..8,
        window in proptest::option::of(1usize..4),
    ) -> ExperimentConfig {
        let mut kernel = KernelSpec::power_law(1, beta);
        kernel.window = window;
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            kind,
            seed,
            replicas,
            n_ladder: (0..steps).map(|i| 8usize << (start + i)).collect(),
            output_dir: None,
            kernel,
            sim: SimSection { alpha, horizon, snapshot_times: vec![0.0, horizon / 2.0, horizon] },
            profile: InitialProfile::GaussianBump { background: 0.5, amplitude: amp, center: vec![center], width },
            test_functions: vec![
                TestFunction::fourier([mode, 0], 1),
                TestFunction::GaussianBump { center: vec![center], width, amplitude: amp },
            ],
            duality: None,
            moments: None,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]
    #[test]
    fn parse_inverts_serialize(c in config()) {
        c.validate().unwrap();
        let text = c.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.hash().unwrap(), c.hash().unwrap());
    }
}

#[test]
fn fixture_configs_parse() {
    for name in ["hydro.toml", "duality.toml", "mosco.toml", "moments.toml", "fluct.toml"] {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn schema_errors_are_config_errors() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/hydro.toml");
    let text = std::fs::read_to_string(path).unwrap();
    for bad in [
        text.replace("schema_version = 1", "schema_version = 2"),
        text.replace("[kernel]", "[kernel]\nexponent = 1.0"),
        text.replace("n_ladder = [16, 32]", "n_ladder = [32, 16]"),
        text.replace("replicas = 4", "replicas = 0"),
        text.replace("beta = 1.0", "beta = 2.5"),
    ] {
        let err = ExperimentConfig::from_toml(&bad).unwrap_err();
        assert_eq!(siplab::harness::exit_code(&err), 2, "{err}");
    }
    assert!(matches!(ExperimentConfig::from_toml("kind = 3"), Err(Error::Config(_))));
}
