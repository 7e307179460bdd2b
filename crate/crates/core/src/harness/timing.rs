use std::hint::black_box;
use std::time::Instant;

/// Mean wall-clock seconds of `detect` per input, on the calling thread.
///
/// The first `warmup` inputs (cycled if there are fewer) are run once
/// untimed, then every input is timed in a single pass.
pub fn time_inference<T, O, F>(inputs: &[T], warmup: usize, mut detect: F) -> f64
where
    F: FnMut(&T) -> O,
{
    if inputs.is_empty() {
        return 0.0;
    }
    for x in inputs.iter().cycle().take(warmup) {
        black_box(detect(black_box(x)));
    }
    let start = Instant::now();
    for x in inputs {
        black_box(detect(black_box(x)));
    }
    start.elapsed().as_secs_f64() / inputs.len() as f64
}
