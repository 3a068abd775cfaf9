#![no_main]

use coexsim::seci::{decode_channel_notification, encode_channel_notification};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for &b in data {
        if let Ok(n) = decode_channel_notification(b) {
            let again = encode_channel_notification(n.channel, n.bandwidth_mhz()).expect("decoded pair encodes");
            assert_eq!(again.byte, b);
        }
    }
});
