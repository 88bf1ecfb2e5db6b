#![no_main]

use libfuzzer_sys::fuzz_target;
use soott::instances::{self, TauSchedule};
use soott::{AdversarialFunction, ProblemParams};

fuzz_target!(|data: &[u8]| {
    let Ok(records) = instances::read_trace_csv(data, "fuzz") else {
        return;
    };
    // Accepted traces must round-trip and map to a valid instance.
    let mut buf = Vec::new();
    instances::write_trace_csv(&records, &mut buf).unwrap();
    assert_eq!(instances::read_trace_csv(buf.as_slice(), "fuzz").unwrap(), records);
    if records.is_empty() {
        return;
    }
    let params = ProblemParams::new(2, 1.0, 0.1, 1).unwrap();
    let inst = instances::instance_from_trace(&records, &TauSchedule::default(), &params, AdversarialFunction::quadratic(1.0))
        .unwrap();
    inst.validate().unwrap();
});
