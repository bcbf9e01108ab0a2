use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use terrainloc::localizer::{CornerCell, RunOptions};
use terrainloc::quarter_car::{generate_road, RoughnessClass};
use terrainloc::scenario::{
    build_map, localize_pass, NoiseConfig, PassData, Scenario, ScenarioConfig,
};
use terrainloc::terrain_map::TerrainMap;
use terrainloc::{
    CornerProfiles, DistanceProfile, Localizer, LocalizerConfig, Status, Units, VehicleGeometry,
};

fn profile(values: &[f64]) -> DistanceProfile {
    DistanceProfile::new(0.0, 0.1, values.to_vec(), Units::Meters).unwrap()
}

#[test]
fn buffer_holds_the_trailing_slice() {
    let road = generate_road(300.0, 0.1, RoughnessClass::C, 3).unwrap();
    let h = road.heights();
    let corners = CornerProfiles::new(profile(h), profile(h), profile(h), profile(h)).unwrap();
    let config = LocalizerConfig::default();
    let mut loc = Localizer::new(config.clone(), VehicleGeometry::new(2.7).unwrap(), 0.1, 0.0).unwrap();
    let capacity = (config.buffer_length / 0.1).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut k = 0;
    while k < corners.len() {
        let n = rng.gen_range(1..50).min(corners.len() - k);
        loc.update_buffer(k as f64 * 0.1, &CornerCell::from_profiles(&corners, k, n));
        k += n;
        let buffered = loc.buffer_profile().unwrap();
        let expect = &h[k.saturating_sub(capacity)..k];
        assert_eq!(buffered.values, expect);
        assert!(loc.buffer_len() <= capacity);
        assert!((loc.odometer().unwrap() - (k - 1) as f64 * 0.1).abs() < 1e-9);
    }
    assert!(loc.is_buffer_full());

    // A gap starts over.
    loc.update_buffer(k as f64 * 0.1 + 5.0, &CornerCell::from_profiles(&corners, 0, 10));
    assert_eq!(loc.buffer_len(), 10);
    assert_eq!(loc.status(), Status::DeadReckoning);
}

struct Fixture {
    config: ScenarioConfig,
    map: TerrainMap,
    live: PassData,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let config = ScenarioConfig {
            seed: 4,
            ..ScenarioConfig::default()
        };
        let scenario = Scenario::new(config.clone()).unwrap();
        let passes: Vec<PassData> = (0..3).map(|i| scenario.simulate_pass(i).unwrap()).collect();
        let (map, _) = build_map(&scenario.graph, &passes, &config).unwrap();
        let live = scenario.simulate_pass(3).unwrap();
        Fixture { config, map, live }
    })
}

#[test]
fn identical_inputs_give_identical_estimates() {
    let f = fixture();
    let a = localize_pass(&f.map, &f.live, &f.config, &RunOptions::default()).unwrap();
    let b = localize_pass(&f.map, &f.live, &f.config, &RunOptions::default()).unwrap();
    assert_eq!(a.estimates, b.estimates);
}

#[test]
fn matched_positions_lie_inside_the_window() {
    let f = fixture();
    let options = RunOptions {
        snapshot_at: (1..80).map(|k| 50.0 * k as f64).collect(),
        ..RunOptions::default()
    };
    let run = localize_pass(&f.map, &f.live, &f.config, &options).unwrap();
    assert!(run.snapshots.len() > 50);
    let spacing = f.map.spacing();
    let capacity = (f.config.localizer.buffer_length_m / spacing).round() as usize;
    let slack = f
        .map
        .master
        .segments()
        .iter()
        .fold(0.0f64, |m, s| m.max(s.anchor.abs()))
        + spacing;
    let loop_length = f.map.graph.length();
    let mut checked = 0;
    for snap in &run.snapshots {
        let e = run
            .estimates
            .iter()
            .find(|e| e.travel_distance == snap.travel_distance)
            .unwrap();
        if e.status != Status::Matched {
            continue;
        }
        let cells = snap.correlation.len() + capacity - 5;
        let lo = snap.window_first_cell as f64 * spacing - slack;
        let span = cells as f64 * spacing + 2.0 * slack;
        let offset = (e.position - lo).rem_euclid(loop_length);
        assert!(offset <= span, "estimate {} outside window from {lo}", e.position);
        checked += 1;
    }
    assert!(checked > 50);
}

#[test]
fn matching_disabled_is_pure_dead_reckoning() {
    let f = fixture();
    let options = RunOptions {
        disable_matching: true,
        ..RunOptions::default()
    };
    let run = localize_pass(&f.map, &f.live, &f.config, &options).unwrap();
    let est = &run.estimates;
    for w in est.windows(2) {
        let moved = w[1].position - w[0].position;
        let travelled = w[1].travel_distance - w[0].travel_distance;
        assert!((moved - travelled).abs() <= 1e-9, "{moved} vs {travelled}");
    }
    let start = est[0].travel_distance;
    for e in est {
        let expected = if e.travel_distance - start > f.config.localizer.lost_after_m {
            Status::Lost
        } else {
            Status::DeadReckoning
        };
        assert_eq!(e.status, expected, "at {}", e.travel_distance);
    }
    assert_eq!(run.match_rate, 0.0);
}

#[test]
fn noiseless_replay_of_a_mapping_pass_is_exact_to_a_cell() {
    let config = ScenarioConfig {
        seed: 8,
        noise: NoiseConfig::none(),
        ..ScenarioConfig::default()
    };
    let scenario = Scenario::new(config.clone()).unwrap();
    let passes: Vec<PassData> = (0..3).map(|i| scenario.simulate_pass(i).unwrap()).collect();
    let (map, _) = build_map(&scenario.graph, &passes, &config).unwrap();
    let run = localize_pass(&map, &passes[1], &config, &RunOptions::default()).unwrap();
    let errors = run.errors.unwrap();
    assert!(errors.max_abs() <= config.mapping.spacing_m, "{}", errors.summary_line());
    assert_eq!(run.match_rate, 1.0);
}
