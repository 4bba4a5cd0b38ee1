#![no_main]

use facerep_cli::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(mut config) = RunConfig::parse(text) {
            config.propagate_seed();
            let _ = config.validate();
            assert_eq!(RunConfig::parse(&config.to_json()).unwrap(), config);
        }
    }
});
