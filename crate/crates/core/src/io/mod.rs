//! Scenario ingestion and results persistence.

mod emit;
mod scenario;
mod shape;

pub use emit::{
    data_paths, emit_results, num, read_manifest, recompute_metrics, summarize, unix_now, verify_manifest, FileEntry,
    RunManifest, StoredMetrics, Summary, DATA_FILES, SUMMARY_WINDOW_DAYS,
};
pub use scenario::{
    load_scenario, parse_scenario_file, preset, Inputs, Overrides, Scenario, ScenarioFile, ScenarioSource, PRESETS,
};
pub use shape::{bundled_load_shape, parse_load_shape, read_load_shape};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::standard_series;
    use crate::simulate::{run_simulation_with_threads, Simulation};

    fn small() -> Scenario {
        let o = Overrides {
            days: Some(2),
            agents_per_node: Some(6),
            ..Default::default()
        };
        load_scenario(&ScenarioSource::parse("mf-shock-info"), &o).unwrap()
    }

    fn emit_run(s: &Scenario, threads: usize, dir: &Path) -> RunManifest {
        let log = run_simulation_with_threads(&s.network, s.types.clone(), s.config.clone(), threads).unwrap();
        let series = standard_series(&log, 2).unwrap();
        emit_results(&log, &series, &s.echo().unwrap(), dir, 0).unwrap()
    }

    #[test]
    fn rerun_is_byte_identical_and_checksums_verify() {
        let s = small();
        let root = tempfile::tempdir().unwrap();
        let (a, b) = (root.path().join("a"), root.path().join("b"));
        let ma = emit_run(&s, 1, &a);
        let mb = emit_run(&s, 2, &b);
        assert_eq!(ma.files, mb.files);
        for (x, y) in data_paths(&a).iter().zip(data_paths(&b)) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{x:?}");
        }
        assert!(verify_manifest(&a).unwrap().is_empty());
        std::fs::write(a.join("lmp.csv"), "tampered").unwrap();
        assert_eq!(verify_manifest(&a).unwrap(), vec!["lmp.csv".to_string()]);
    }

    #[test]
    fn empty_horizon_writes_headers_only() {
        let s = small();
        let log = Simulation::new(&s.network, s.types.clone(), s.config.clone(), 1).unwrap().finish();
        let dir = tempfile::tempdir().unwrap();
        let series = standard_series(&log, 2).unwrap();
        emit_results(&log, &series, &s.echo().unwrap(), dir.path(), 0).unwrap();
        for f in DATA_FILES.iter().filter(|f| f.ends_with(".csv")) {
            let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
            let lines = text.lines().count();
            // The IMV table lists every bus even when there is nothing to average.
            if *f == "imv.csv" {
                assert_eq!(lines, 15, "{f}");
            } else {
                assert_eq!(lines, 1, "{f}: {text}");
            }
        }
    }

    #[test]
    fn stored_metrics_match_the_log() {
        let s = small();
        let dir = tempfile::tempdir().unwrap();
        let log = run_simulation_with_threads(&s.network, s.types.clone(), s.config.clone(), 1).unwrap();
        emit_results(&log, &[], &s.echo().unwrap(), dir.path(), 0).unwrap();
        let m = recompute_metrics(dir.path(), 3, 10).unwrap();
        let direct = summarize(&log);
        assert_eq!(m.window_days, 2);
        assert_eq!(m.imv, direct.imv[2]);
        assert_eq!(m.mean_daily_spread, direct.mean_daily_spread[2]);
        assert!((m.window_cost - direct.window_cost).abs() <= 1e-9 * direct.window_cost.abs());
    }

    #[test]
    fn numbers_keep_seventeen_digits() {
        let x = 0.1 + 0.2;
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
        assert_eq!(num(158.0), "1.5800000000000000e2");
    }
}
