#![no_main]

use libfuzzer_sys::fuzz_target;
use tbfusion::network::NetworkSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = toml::from_str::<NetworkSpec>(text) else { return };
    if spec.validate().is_ok() && spec.n_qubits() <= 64 {
        let t = spec.initial_tableau().expect("valid spec builds a tableau");
        assert!(t.validate().is_ok());
    }
});
