#![no_main]

use libfuzzer_sys::fuzz_target;
use soott::experiments;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = experiments::read_results_csv(data, "fuzz") else {
        return;
    };
    let mut buf = Vec::new();
    experiments::write_results_csv(&rows, &mut buf).unwrap();
    assert_eq!(experiments::read_results_csv(buf.as_slice(), "fuzz").unwrap(), rows);
    let _ = soott::plot::sweep_charts(&rows).iter().map(soott::plot::render_svg).count();
});
