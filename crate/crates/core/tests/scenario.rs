use std::path::Path;
use std::sync::OnceLock;

use terrainloc::scenario::{build_map, PassData, Scenario, ScenarioConfig};
use terrainloc::terrain_map::{outcome_fraction, OutcomeKind};

struct Fixture {
    config: ScenarioConfig,
    scenario: Scenario,
    passes: Vec<PassData>,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let config = ScenarioConfig {
            seed: 21,
            ..ScenarioConfig::default()
        };
        let scenario = Scenario::new(config.clone()).unwrap();
        let passes = (0..3).map(|i| scenario.simulate_pass(i).unwrap()).collect();
        Fixture {
            config,
            scenario,
            passes,
        }
    })
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn reference_pass_lasts_420_seconds() {
    let f = fixture();
    for s in &f.passes[0].streams {
        let end = *s.time.last().unwrap();
        assert!((end - 420.0).abs() <= f.config.drive.dt_s, "{end}");
    }
}

#[test]
fn gps_error_has_the_configured_spread() {
    let f = fixture();
    let graph = &f.scenario.graph;
    let frame = *graph.frame();
    let mut errors = Vec::new();
    for pass in &f.passes {
        for fix in &pass.gps {
            // GPS fixes fall on truth samples.
            let &(_, route) = pass
                .truth
                .iter()
                .find(|t| t.0 == fix.distance)
                .expect("fix on a truth sample");
            let true_xy = graph.point_at(route);
            let xy = frame.to_local(&fix.point);
            errors.push(xy[0] - true_xy[0]);
            errors.push(xy[1] - true_xy[1]);
        }
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let std = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(errors.len() > 2000);
    assert!((std / 3.0 - 1.0).abs() < 0.15, "std {std}");
}

/// Stream files carry 9 significant digits; everything else is exact.
fn assert_quantized_copy(read: &PassData, pass: &PassData) {
    for (r, s) in read.streams.iter().zip(&pass.streams) {
        let channels = [
            (&r.time, &s.time),
            (&r.wheel_accel, &s.wheel_accel),
            (&r.shock_displacement, &s.shock_displacement),
            (&r.shock_velocity, &s.shock_velocity),
            (&r.force, &s.force),
            (&r.speed, &s.speed),
        ];
        for (a, b) in channels {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 5e-9 * y.abs(), "{x} vs {y}");
            }
        }
    }
    assert_eq!(read.truth, pass.truth);
    assert_eq!(read.gps.len(), pass.gps.len());
    for (a, b) in read.gps.iter().zip(&pass.gps) {
        assert_eq!((a.distance, a.point.lat, a.point.lon), (b.distance, b.point.lat, b.point.lon));
    }
}

#[test]
fn pass_files_are_reproducible() {
    let f = fixture();
    let again = f.scenario.simulate_pass(0).unwrap();
    assert!(again == f.passes[0]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    f.passes[0].write(a.path()).unwrap();
    again.write(b.path()).unwrap();
    let fa = files(a.path());
    assert_eq!(fa.len(), 6);
    assert!(fa == files(b.path()), "pass files differ between runs");
    assert_quantized_copy(&PassData::read(a.path()).unwrap(), &f.passes[0]);
}

#[test]
fn single_pass_map_is_all_bootstrap() {
    let f = fixture();
    let (map, report) = build_map(&f.scenario.graph, &f.passes[..1], &f.config).unwrap();
    assert!(!report.is_empty());
    assert!(report.iter().all(|r| r.kind == OutcomeKind::Bootstrap));
    assert!(map.master.coverage() > 0.9);
}

#[test]
fn later_passes_match_and_files_equal_memory() {
    let f = fixture();
    let (map, report) = build_map(&f.scenario.graph, &f.passes, &f.config).unwrap();
    for source in 1..3 {
        let own: Vec<_> = report.iter().filter(|r| r.source == source).copied().collect();
        let matched = outcome_fraction(&own, OutcomeKind::Matched);
        assert!(matched >= 0.9, "pass {source}: {matched}");
    }

    // Building from the written files reproduces every merge decision.
    let dir = tempfile::tempdir().unwrap();
    let from_files: Vec<PassData> = f
        .passes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = dir.path().join(format!("pass_{i}"));
            p.write(&d).unwrap();
            PassData::read(&d).unwrap()
        })
        .collect();
    let (map2, report2) = build_map(&f.scenario.graph, &from_files, &f.config).unwrap();
    assert_eq!(report2.len(), report.len());
    for (a, b) in report2.iter().zip(&report) {
        assert_eq!((a.source, a.index, a.kind, a.first_cell), (b.source, b.index, b.kind, b.first_cell));
    }
    let mut worst = 0.0f64;
    for c in 0..map.master.cell_count() {
        assert_eq!(map2.master.weight(c), map.master.weight(c));
        worst = worst.max((map2.master.value(c) - map.master.value(c)).abs());
    }
    assert!(worst < 1e-6, "max height difference {worst}");
}
