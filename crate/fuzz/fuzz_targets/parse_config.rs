#![no_main]

use libfuzzer_sys::fuzz_target;
use magvisc::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text) {
        // anything accepted must survive a round trip and build its grid
        let once = toml::to_string(&cfg).expect("accepted configs serialize");
        let again = parse_config(&once).expect("round trip parses");
        assert_eq!(toml::to_string(&again).unwrap(), once);
        let _ = cfg.make_grid();
    }
});
