use std::path::Path;

use pursuit_core::config::{Config, KEYS};

fn example_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../pursuit.example.toml")
}

#[test]
fn annotated_example_parses_to_the_defaults() {
    assert_eq!(Config::from_file(&example_path()).unwrap(), Config::default());
}

#[test]
fn annotated_example_mentions_every_key() {
    let text = std::fs::read_to_string(example_path()).unwrap();
    for (key, _) in KEYS {
        let name = key.rsplit('.').next().unwrap();
        assert!(text.contains(&format!("{name} =")), "{key} missing from the example");
    }
}
