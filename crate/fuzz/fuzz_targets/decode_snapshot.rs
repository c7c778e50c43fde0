#![no_main]

use libfuzzer_sys::fuzz_target;
use magvisc::io::{decode_snapshot, encode_snapshot};

fuzz_target!(|data: &[u8]| {
    if let Ok(snap) = decode_snapshot(data) {
        let bytes = encode_snapshot(&snap.state, &snap.physics, snap.epsilon);
        let back = decode_snapshot(&bytes).expect("re-encoded snapshot decodes");
        assert_eq!(encode_snapshot(&back.state, &back.physics, back.epsilon), bytes);
        let _ = snap.state.validate();
    }
});
