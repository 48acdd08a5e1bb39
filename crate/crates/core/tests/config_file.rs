use gdmgame_core::harness::ExperimentConfig;

#[test]
fn shipped_default_config_equals_built_in_defaults() {
    let text = include_str!("../../../configs/default.toml");
    let from_file = ExperimentConfig::from_toml(text).unwrap();
    assert_eq!(from_file, ExperimentConfig::default());
}
