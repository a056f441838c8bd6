//! Runtime trends over the full-scale surface sizes.

use hris_bench::config::{ExperimentConfig, Profile};
use hris_bench::experiments::cmd_bench_runtime;

#[test]
fn optimizer_grows_with_surface_size_while_inference_stays_flat() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::profile_defaults(Profile::Paper);
    cfg.output_dir = dir.path().to_path_buf();
    // solve times vary with the number of sweeps a channel needs, so the
    // medians need a few dozen solves; at N = 150 each takes about a second
    cfg.runtime.ao_trials = 30;
    cfg.runtime.warmup = 2;
    let rows = cmd_bench_runtime(&cfg).unwrap();
    let medians = |prefix: &str| -> Vec<f64> {
        rows.iter().filter(|r| r.method.starts_with(prefix)).map(|r| r.median_ms).collect()
    };
    let (ao, drl) = (medians("ao"), medians("drl"));
    println!("N = {:?}: optimizer {ao:?} ms, drl {drl:?} ms", cfg.runtime.n_values);
    assert!(ao.windows(2).all(|w| w[1] > w[0]), "optimizer runtime not increasing: {ao:?}");
    let spread = drl.iter().cloned().fold(f64::MIN, f64::max) / drl.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 3.0, "inference varies {spread:.2}× across N");
}
