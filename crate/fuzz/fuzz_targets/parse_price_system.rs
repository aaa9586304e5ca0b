#![no_main]

use lexmarket::io::{parse_price_system, to_json_string};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(sys) = parse_price_system(data) {
        assert_eq!(sys.p.len(), sys.d);
        let again = parse_price_system(to_json_string(&sys).as_bytes()).unwrap();
        assert_eq!(again, sys);
    }
});
