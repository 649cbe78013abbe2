#![no_main]

use libfuzzer_sys::fuzz_target;
use tbfusion::analysis::BasisPair;
use tbfusion::densop::PauliString;
use tbfusion::emitter::Basis;
use tbfusion::fusion::{DetectionPattern, FusionOutcome};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(p) = s.parse::<DetectionPattern>() {
        assert_eq!(p.to_string().parse::<DetectionPattern>().expect("display parses"), p);
        let _ = p.classify();
    }
    if let Ok(o) = s.parse::<FusionOutcome>() {
        assert_eq!(o.to_string().parse::<FusionOutcome>().expect("display parses"), o);
    }
    if let Ok(b) = s.parse::<BasisPair>() {
        assert_eq!(b.to_string().parse::<BasisPair>().expect("display parses"), b);
    }
    let _ = s.parse::<Basis>();
    if let Ok(p) = s.parse::<PauliString>() {
        if p.len() <= 4 {
            let _ = p.matrix();
        }
    }
});
