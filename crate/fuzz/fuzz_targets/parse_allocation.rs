#![no_main]

use lexmarket::io::{parse_allocation, to_json_string};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(x) = parse_allocation(data) {
        assert!(x.n_rows() > 0 && x.n_cols() > 0);
        let again = parse_allocation(to_json_string(&x).as_bytes()).unwrap();
        assert_eq!(again, x);
    }
});
