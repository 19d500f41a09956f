#![no_main]

libfuzzer_sys::fuzz_target!(|data: &[u8]| rfnode_fuzz::generate_spec(data));
