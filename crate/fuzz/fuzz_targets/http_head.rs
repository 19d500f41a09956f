#![no_main]

libfuzzer_sys::fuzz_target!(|data: &[u8]| rfnode_fuzz::http_head(data));
