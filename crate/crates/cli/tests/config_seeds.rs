use std::fs;
use std::path::PathBuf;

use facerep_cli::RunConfig;

#[test]
fn config_fuzz_seeds_parse_validate_and_roundtrip() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/run_config");
    let mut count = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let mut c = RunConfig::load(&path).unwrap_or_else(|e| panic!("{e}"));
        c.propagate_seed();
        c.validate()
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(RunConfig::parse(&c.to_json()).unwrap(), c);
        count += 1;
    }
    assert!(count >= 3);
}
