#![no_main]
use becsim_core::initdata::parse_table_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = parse_table_csv(data) {
        let (lo, hi) = table.x_range();
        assert!(lo < hi);
        for x in [lo, 0.5 * (lo + hi), hi] {
            let _ = table.eval(x);
        }
    }
});
