#![no_main]

use libfuzzer_sys::fuzz_target;
use tbfusion::analysis::{read_records_json, write_records_json, CorrelationTable};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_records_json(data) {
        let mut buf = Vec::new();
        write_records_json(&records, &mut buf).expect("write");
        assert_eq!(read_records_json(buf.as_slice()).expect("reread"), records);
        let _ = CorrelationTable::from_records(&records).entries();
    }
});
