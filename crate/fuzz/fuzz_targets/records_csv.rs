#![no_main]

use libfuzzer_sys::fuzz_target;
use tbfusion::analysis::{read_records_csv, write_records_csv, CorrelationTable};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_records_csv(data) {
        for r in &records {
            r.validate().expect("reader only yields valid records");
        }
        let mut buf = Vec::new();
        write_records_csv(&records, &mut buf).expect("write");
        assert_eq!(read_records_csv(buf.as_slice()).expect("reread"), records);
        let _ = CorrelationTable::from_records(&records).entries();
    }
});
