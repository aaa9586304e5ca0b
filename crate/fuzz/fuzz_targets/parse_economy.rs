#![no_main]

use lexmarket::economy::validate_economy;
use lexmarket::io::{economy_json, parse_economy, to_json_string};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(e) = parse_economy(data) {
        // accepted economies are rectangular and survive a round trip
        let _ = validate_economy(&e);
        let again = parse_economy(to_json_string(&economy_json(&e)).as_bytes()).unwrap();
        assert_eq!(again, e);
    }
});
