#![no_main]

use libfuzzer_sys::fuzz_target;
use soott::predictors;

fuzz_target!(|data: &[u8]| {
    let Ok(stream) = predictors::read_predictions_csv(data, "fuzz") else {
        return;
    };
    assert!(stream.u_hat.iter().flatten().all(|v| v.is_finite()));
    let mut buf = Vec::new();
    predictors::write_predictions_csv(&stream, &mut buf).unwrap();
    let back = predictors::read_predictions_csv(buf.as_slice(), "fuzz").unwrap();
    assert_eq!(back.u_hat, stream.u_hat);
});
