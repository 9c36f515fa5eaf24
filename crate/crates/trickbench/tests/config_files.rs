use std::path::Path;

use proptest::prelude::*;
use trickbench::config;
use trickbench::Error;
use trickbench_core::env::Task;
use trickbench_core::harness::{Algorithm, ExperimentConfig};
use trickbench_core::init::{InitKind, InitScheme};

fn shipped(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn shipped_configs_are_the_defaults() {
    for algorithm in Algorithm::ALL {
        let loaded = config::load(&shipped(&format!("{algorithm}.toml"))).unwrap();
        assert_eq!(loaded, ExperimentConfig::new(algorithm, Task::CartpoleSwingup), "{algorithm}");
    }
}

#[test]
fn unknown_algorithm_is_a_config_error() {
    let err = config::parse("[experiment]\nalgorithm = \"ddpg\"\nenv = \"cartpole-swingup\"\n").unwrap_err();
    assert!(matches!(err, Error::Toml(_)), "{err}");
    assert!(err.to_string().contains("ddpg"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let base = "[experiment]\nalgorithm = \"ppo\"\nenv = \"cartpole-swingup\"\n";
    assert!(config::parse(&format!("{base}lr = 1.0\n")).is_err());
    assert!(config::parse(&format!("{base}[ppo]\nclip = 0.3\n")).is_err());
    assert!(config::parse(&format!("{base}[ddpg]\n")).is_err());
}

#[test]
fn invalid_values_are_rejected() {
    let base = "[experiment]\nalgorithm = \"ppo\"\nenv = \"cartpole-swingup\"\n";
    assert!(matches!(
        config::parse(&format!("{base}seeds = []\n")),
        Err(Error::Core(trickbench_core::Error::Config(_)))
    ));
    assert!(config::parse(&format!("{base}init = \"he\"\n")).is_err());
    assert!(config::parse(&format!("{base}[ppo]\nclip_range = -1.0\n")).is_err());
}

#[test]
fn missing_file_names_the_path() {
    let err = config::load(Path::new("/nonexistent/x.toml")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/x.toml"), "{err}");
}

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    (
        (
            prop::sample::select(Algorithm::ALL.to_vec()),
            prop::sample::select(Task::ALL.to_vec()),
            prop::collection::vec(0u64..1 << 40, 1..12),
            1usize..5000,
            1usize..50,
            1usize..20,
            any::<bool>(),
            prop::option::of(prop::sample::select(InitKind::ALL.to_vec())),
            1e-3f64..10.0,
            prop::option::of(-1e3f64..1e3),
        ),
        (
            1e-6f64..1.0,
            prop::sample::select(InitKind::ALL.to_vec()),
            prop::collection::vec(1usize..512, 1..4),
            any::<[bool; 5]>(),
            1usize..20,
            1e-6f64..1.0,
            1usize..10,
            0.0f64..1.0,
        ),
    )
        .prop_map(|(e, a)| {
            let mut c = ExperimentConfig::new(e.0, e.1);
            c.seeds = e.2;
            c.episodes = e.3;
            c.eval_interval = e.4;
            c.eval_episodes = e.5;
            c.input_normalization = e.6;
            c.init = e.7;
            c.orthogonal_gain = e.8;
            c.target_return = e.9;
            c.ppo.learning_rate = a.0;
            c.ppo.init = InitScheme::new(a.1);
            c.ppo.hidden = a.2.clone();
            [c.ppo.lrs, c.ppo.adv_norm, c.ppo.grad_clip, c.ppo.kl_stop, c.ppo.kl_cutoff] = a.3;
            c.ppo.epochs = a.4;
            c.trpo.max_kl = a.5;
            c.trpo.hidden = a.2;
            c.td3.update_steps = a.6;
            c.sac.alpha = a.7;
            c.td3.init = InitScheme::orthogonal(a.0 * 3.0);
            c
        })
}

proptest! {
    #[test]
    fn every_field_round_trips(c in arb_config()) {
        let text = config::to_toml(&c);
        prop_assert_eq!(config::parse(&text).unwrap(), c.clone());
        prop_assert_eq!(config::config_hash(&config::parse(&text).unwrap()), config::config_hash(&c));
    }
}
