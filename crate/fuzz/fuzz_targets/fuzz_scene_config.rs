//! Fuzzes the scene-config parser: it must never panic on arbitrary text.
//! (Accepted configs are not fed to scene generation here — the parser
//! places no bounds on `points` or `frames`, so generation could allocate
//! unboundedly; the parser itself is the attack surface.)

#![no_main]

use libfuzzer_sys::fuzz_target;

use cubevo::sim::SceneConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = SceneConfig::parse(text);
});
