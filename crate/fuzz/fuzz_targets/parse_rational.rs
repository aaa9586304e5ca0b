#![no_main]

use lexmarket::rational::{fmt_q, parse_q};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(v) = parse_q(text) {
            assert_eq!(parse_q(&fmt_q(&v)).unwrap(), v);
        }
    }
});
