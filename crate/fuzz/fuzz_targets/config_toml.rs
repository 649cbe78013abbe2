#![no_main]

use libfuzzer_sys::fuzz_target;
use tbfusion::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_toml(text) {
        let again = RunConfig::from_toml(&cfg.to_toml().expect("accepted config serializes")).expect("round trip parses");
        assert_eq!(again, cfg);
        let _ = cfg.schedule.allocate(cfg.experiment.shots.min(1 << 20));
    }
});
