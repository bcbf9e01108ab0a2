//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p terrainloc --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{num_complex::Complex, FftPlanner};

use terrainloc::localizer::{evaluate_errors, RunOptions, Status};
use terrainloc::matching::{fast_cross_correlation, raw_cross_correlation};
use terrainloc::quarter_car::{
    generate_road, identify_parameters, simulate_run, simulate_run_with_force,
    IdentificationOptions, RoadInput, RoughnessClass, SensorNoise, SimulationOptions,
};
use terrainloc::reconstruction::{estimate_road_profile, estimate_with_wheel_position};
use terrainloc::resample::{convert_time_to_distance, Units};
use terrainloc::scenario::{run_experiment, ExperimentResult, NoiseConfig, ScenarioConfig};
use terrainloc::terrain_map::{
    load_map, save_map, GraphMap, LocalFrame, MatchOptions, MatchOutcome, MatchedInterval, Node,
    Stretch, TerrainMap,
};
use terrainloc::{DistanceProfile, Error, QuarterCarParams, ReconstructionConfig, TimeProfile};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let reference = reference_runs();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("fast correlation equals direct correlation", Box::new(correlation_oracle)),
        ("road reconstruction fidelity", Box::new(reconstruction_fidelity)),
        ("time-to-distance resampling exactness", Box::new(resampling_exactness)),
        ("map convergence over repeated passes", Box::new(map_convergence)),
        ("match clarity on the reference scenario", Box::new(|| match_clarity(&reference))),
        ("localization error distribution", Box::new(|| error_distribution(&reference))),
        ("dead reckoning and recovery", Box::new(dead_reckoning)),
        ("simulator and identification", Box::new(simulator_checks)),
        ("map persistence", Box::new(|| persistence(&reference))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} - {name}: {} [{:.1} s]",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------- 1

fn correlation_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let started = Instant::now();
    let mut fast_time = Duration::ZERO;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = rng.gen_range(10..=2000);
        let n = rng.gen_range(m..=50_000);
        let snippet: Vec<f64> = (0..m).map(|_| normal.sample(&mut rng)).collect();
        let stream: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let t = Instant::now();
        let fast = fast_cross_correlation(&snippet, &stream).unwrap();
        fast_time += t.elapsed();
        let raw = raw_cross_correlation(&snippet, &stream).unwrap();
        let scale = raw.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let err = fast
            .iter()
            .zip(&raw)
            .fold(0.0f64, |a, (f, r)| a.max((f - r).abs()));
        worst = worst.max(err / scale);
    }
    let total = started.elapsed();
    verdict(
        worst <= 1e-9 && total < Duration::from_secs(60),
        format!(
            "1000 pairs, max relative deviation {worst:.2e} (limit 1e-9), fft {:.1} s, total {:.1} s (limit 60 s)",
            fast_time.as_secs_f64(),
            total.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

fn reconstruction_fidelity() -> Verdict {
    let params = QuarterCarParams::default();
    let road = generate_road(3200.0, 0.05, RoughnessClass::C, 21).unwrap();
    let options = SimulationOptions {
        dt: 1e-3,
        start_distance: 0.0,
        noise: SensorNoise::default(),
        seed: 0,
        record_truth: true,
    };
    let run = simulate_run(&road, &params, |_| 10.0, 310.0, &options).unwrap();
    let truth = run.truth.as_ref().unwrap();

    let config = ReconstructionConfig::default();
    let estimate = estimate_road_profile(&run.stream, &config).unwrap();
    let spacing = 0.1;
    let profile = convert_time_to_distance(&estimate, spacing).unwrap();
    let skip = (10.0 * config.transient_duration() / spacing).ceil() as usize;
    let reconstructed = &profile.values[skip..];
    let actual: Vec<f64> = (skip..profile.len())
        .map(|i| road.height_at(profile.position(i)))
        .collect();
    let segment = 2048;
    let coherence = welch_coherence(reconstructed, &actual, segment);
    let cycles_per_m = |k: usize| k as f64 / (segment as f64 * spacing);
    let band: Vec<f64> = (1..coherence.len())
        .filter(|&k| (1.0 / 50.0..=1.0).contains(&cycles_per_m(k)))
        .map(|k| coherence[k])
        .collect();
    let min_coherence = band.iter().copied().fold(f64::INFINITY, f64::min);

    let inverse = estimate_with_wheel_position(&run.stream, &params, &truth.wheel_position).unwrap();
    let inverse_err = inverse
        .height
        .iter()
        .zip(&truth.road_height)
        .fold(0.0f64, |a, (e, r)| a.max((e - r).abs()));

    verdict(
        min_coherence > 0.95 && inverse_err < 1e-9,
        format!(
            "min coherence {min_coherence:.4} over {} bins at 1-50 m (limit > 0.95); algebraic inverse max error {inverse_err:.2e} m (limit 1e-9)",
            band.len()
        ),
    )
}

/// Magnitude-squared coherence with Hann-windowed, half-overlapping segments.
fn welch_coherence(x: &[f64], y: &[f64], segment: usize) -> Vec<f64> {
    let fft = FftPlanner::new().plan_fft_forward(segment);
    let window: Vec<f64> = (0..segment)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / segment as f64).cos())
        .collect();
    let bins = segment / 2 + 1;
    let mut pxx = vec![0.0; bins];
    let mut pyy = vec![0.0; bins];
    let mut pxy = vec![Complex::new(0.0, 0.0); bins];
    let spectrum = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let mut buf: Vec<Complex<f64>> = v
            .iter()
            .zip(&window)
            .map(|(a, w)| Complex::new((a - mean) * w, 0.0))
            .collect();
        fft.process(&mut buf);
        buf
    };
    let mut start = 0;
    while start + segment <= x.len().min(y.len()) {
        let fx = spectrum(&x[start..start + segment]);
        let fy = spectrum(&y[start..start + segment]);
        for k in 0..bins {
            pxx[k] += fx[k].norm_sqr();
            pyy[k] += fy[k].norm_sqr();
            pxy[k] += fx[k] * fy[k].conj();
        }
        start += segment / 2;
    }
    (0..bins)
        .map(|k| pxy[k].norm_sqr() / (pxx[k] * pyy[k]))
        .collect()
}

// ---------------------------------------------------------------- 3

fn resampling_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let mut worst = 0.0f64;
    let mut idle_identical = true;
    for _ in 0..200 {
        let n = rng.gen_range(50..2000);
        let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-0.1..0.1));
        let mut time = Vec::with_capacity(n);
        let mut speed = Vec::with_capacity(n);
        let mut t = 0.0;
        for _ in 0..n {
            time.push(t);
            speed.push(rng.gen_range(0.05..40.0));
            t += rng.gen_range(1e-3..0.05);
        }
        let mut distance = vec![0.0];
        for i in 1..n {
            let d = distance[i - 1] + 0.5 * (speed[i - 1] + speed[i]) * (time[i] - time[i - 1]);
            distance.push(d);
        }
        let height: Vec<f64> = distance.iter().map(|d| a + b * d).collect();
        let spacing = rng.gen_range(0.02..0.5);
        let profile = TimeProfile::new(time.clone(), height.clone(), speed.clone()).unwrap();
        let out = convert_time_to_distance(&profile, spacing).unwrap();
        for (i, v) in out.values.iter().enumerate() {
            worst = worst.max((v - (a + b * out.position(i))).abs());
        }

        // Idle records before the start and between moving records.
        let (mut t2, mut h2, mut v2) = (vec![-1.0, -0.5], vec![7.0, -3.0], vec![0.0, 0.0]);
        for i in 0..n {
            t2.push(time[i]);
            h2.push(height[i]);
            v2.push(speed[i]);
            if i + 1 < n && rng.gen_bool(0.3) {
                t2.push(0.5 * (time[i] + time[i + 1]));
                h2.push(rng.gen_range(-5.0..5.0));
                v2.push(0.0);
            }
        }
        let idle = convert_time_to_distance(&TimeProfile::new(t2, h2, v2).unwrap(), spacing).unwrap();
        idle_identical &= idle == out;
    }
    verdict(
        worst <= 1e-12 && idle_identical,
        format!(
            "200 random speed profiles, max affine deviation {worst:.2e} (limit 1e-12); idle records change nothing: {idle_identical}"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn straight_graph(length: f64) -> GraphMap {
    let frame = LocalFrame::new(48.0, 11.0);
    let nodes = (0..3)
        .map(|i| {
            let g = frame.to_gps([i as f64 * length / 2.0, 0.0]);
            Node {
                id: i + 1,
                lat: g.lat,
                lon: g.lon,
            }
        })
        .collect();
    GraphMap::from_nodes(nodes, false).unwrap()
}

fn map_convergence() -> Verdict {
    let spacing = 0.1;
    let length = 1000.0;
    let road = generate_road(length, spacing, RoughnessClass::C, 4).unwrap();
    let truth = road.heights();
    let mut map = TerrainMap::new(straight_graph(length), spacing).unwrap();
    let cells = map.master.cell_count().min(truth.len());
    let noise = Normal::new(0.0, 0.002).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9A);
    let options = MatchOptions::default();
    let gps = map.graph.gps_at(0.0);
    let stretch_cells = 1000;

    let rms = |map: &TerrainMap| {
        let sum: f64 = (0..cells)
            .map(|c| (map.master.value(c) - truth[c]).powi(2))
            .sum();
        (sum / cells as f64).sqrt()
    };
    let mut observations = vec![Vec::new(); cells];
    let mut single = 0.0;
    for pass in 0..9 {
        let mut first = 0;
        while first < cells {
            let count = stretch_cells.min(cells - first);
            let values: Vec<f64> = (first..first + count)
                .map(|c| truth[c] + noise.sample(&mut rng))
                .collect();
            for (k, v) in values.iter().enumerate() {
                observations[first + k].push(*v);
            }
            let stretch = Stretch {
                profile: DistanceProfile::new(0.0, spacing, values, Units::Meters).unwrap(),
                start_gps: gps,
                center_gps: gps,
                end_gps: gps,
                source: pass,
            };
            let outcome = MatchOutcome::Matched(MatchedInterval {
                first_cell: first as i64,
                count,
                ratio: 0.1,
                gps_first_cell: first as f64,
            });
            map.merge_stretch(&stretch, &outcome, &options).unwrap();
            first += count;
        }
        if pass == 0 {
            single = rms(&map);
        }
    }
    let merged = rms(&map);
    let ratio = merged / single;

    let mut worst_mean = 0.0f64;
    let mut weights_ok = true;
    for (c, obs) in observations.iter().enumerate() {
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        worst_mean = worst_mean.max((map.master.value(c) - mean).abs());
        weights_ok &= map.master.weight(c) as usize == obs.len();
    }
    verdict(
        ratio <= 0.45 && worst_mean <= 1e-12 && weights_ok,
        format!(
            "single-pass RMS {:.3} mm, 9-pass RMS {:.3} mm, ratio {ratio:.3} (limit 0.45); running mean vs arithmetic mean max {worst_mean:.1e} m, weights equal merge count: {weights_ok}",
            single * 1e3,
            merged * 1e3
        ),
    )
}

// ---------------------------------------------------------------- 5, 6, 9

struct ReferenceRuns {
    noisy: Vec<(u64, Result<ExperimentResult, Error>, Duration)>,
    noiseless: Vec<(u64, Result<ExperimentResult, Error>, Duration)>,
}

fn run_seed(seed: u64, noiseless: bool) -> (u64, Result<ExperimentResult, Error>, Duration) {
    let mut config = ScenarioConfig {
        seed,
        ..ScenarioConfig::default()
    };
    if noiseless {
        config.noise = NoiseConfig::none();
    }
    let t = Instant::now();
    let result = run_experiment(&config, &RunOptions::default());
    (seed, result, t.elapsed())
}

fn reference_runs() -> ReferenceRuns {
    ReferenceRuns {
        noisy: (1..=10).map(|s| run_seed(s, false)).collect(),
        noiseless: (1..=3).map(|s| run_seed(s, true)).collect(),
    }
}

fn match_clarity(runs: &ReferenceRuns) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut slowest = Duration::ZERO;
    for (seed, result, took) in &runs.noisy {
        slowest = slowest.max(*took);
        match result {
            Ok(r) => {
                let l = &r.localization;
                let clear = l
                    .estimates
                    .iter()
                    .filter(|e| e.status == Status::Matched)
                    .all(|e| e.ratio.is_some_and(|q| q < 0.6));
                pass &= l.match_rate >= 0.95 && clear;
                parts.push(format!("{seed}:{:.1}%", 100.0 * l.match_rate));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{seed}:error {e}"));
            }
        }
    }
    pass &= slowest < Duration::from_secs(300);
    verdict(
        pass,
        format!(
            "MATCHED share per seed [{}] (limit >= 95%); slowest seed {:.1} s (limit 300 s)",
            parts.join(" "),
            slowest.as_secs_f64()
        ),
    )
}

fn error_distribution(runs: &ReferenceRuns) -> Verdict {
    let mut pass = true;
    let (mut min_1m, mut min_half) = (f64::INFINITY, f64::INFINITY);
    for (_, result, _) in &runs.noisy {
        match result.as_ref().ok().and_then(|r| r.localization.errors.as_ref()) {
            Some(e) => {
                min_1m = min_1m.min(e.fraction_below(1.0));
                min_half = min_half.min(e.fraction_below(0.5));
            }
            None => pass = false,
        }
    }
    pass &= min_1m >= 0.8 && min_half >= 0.5;
    let mut worst_clean = 0.0f64;
    for (_, result, _) in &runs.noiseless {
        match result.as_ref().ok().and_then(|r| r.localization.errors.as_ref()) {
            Some(e) => worst_clean = worst_clean.max(e.max_abs()),
            None => pass = false,
        }
    }
    pass &= worst_clean <= 0.1;
    verdict(
        pass,
        format!(
            "worst seed: {:.1}% below 1 m (limit 80%), {:.1}% below 0.5 m (limit 50%); noiseless max error {worst_clean:.3} m over {} seeds (limit 0.1 m)",
            100.0 * min_1m,
            100.0 * min_half,
            runs.noiseless.len()
        ),
    )
}

fn persistence(runs: &ReferenceRuns) -> Verdict {
    let Some(map) = runs.noisy.iter().find_map(|(_, r, _)| r.as_ref().ok().map(|r| &r.map)) else {
        return verdict(false, "no reference map available");
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loop.map");
    save_map(&path, map).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let t = Instant::now();
    let loaded = load_map(&path);
    let load_time = t.elapsed();
    let exact = match &loaded {
        Ok(m) => {
            let again = dir.path().join("again.map");
            save_map(&again, m).unwrap();
            m == map && std::fs::read(&again).unwrap() == bytes
        }
        Err(_) => false,
    };

    let mut rejected = 0;
    let probes = [bytes.len() / 3, bytes.len() / 2, bytes.len() - 10];
    for (i, &at) in probes.iter().enumerate() {
        let mut damaged = bytes.clone();
        damaged[at] ^= 1 << i;
        let p = dir.path().join(format!("damaged{i}.map"));
        std::fs::write(&p, &damaged).unwrap();
        rejected += usize::from(matches!(load_map(&p), Err(Error::Checksum { .. })));
    }
    let truncated = dir.path().join("truncated.map");
    std::fs::write(&truncated, &bytes[..bytes.len() - 1000]).unwrap();
    rejected += usize::from(matches!(load_map(&truncated), Err(Error::Checksum { .. })));

    verdict(
        exact && rejected == 4 && load_time < Duration::from_secs(1),
        format!(
            "{:.1} km map, {} bytes: bit-exact round trip {exact}; {rejected}/4 damaged files rejected by checksum; load {:.1} ms (limit 1 s)",
            map.graph.length() / 1000.0,
            bytes.len(),
            load_time.as_secs_f64() * 1e3
        ),
    )
}

// ---------------------------------------------------------------- 7

fn dead_reckoning() -> Verdict {
    let config = ScenarioConfig {
        seed: 7,
        noise: NoiseConfig::none(),
        ..ScenarioConfig::default()
    };
    let stripe = (1500.0, 2000.0);
    let options = RunOptions {
        disabled: vec![stripe],
        ..RunOptions::default()
    };
    let result = match run_experiment(&config, &options) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("experiment failed: {e}")),
    };
    let estimates = &result.localization.estimates;
    let mut worst_delta = 0.0f64;
    let mut in_stripe = 0;
    for w in estimates.windows(2) {
        if w[1].travel_distance >= stripe.0 && w[1].travel_distance < stripe.1 {
            in_stripe += 1;
            let odo = w[1].travel_distance - w[0].travel_distance;
            let pos = w[1].position - w[0].position;
            worst_delta = worst_delta.max((pos - odo).abs());
        }
    }
    let all_dr = estimates
        .iter()
        .filter(|e| e.travel_distance >= stripe.0 && e.travel_distance < stripe.1)
        .all(|e| e.status == Status::DeadReckoning);
    let first_fix = estimates
        .iter()
        .find(|e| e.travel_distance >= stripe.1 && e.status == Status::Matched);
    let truth = run_truth(&config);
    let fix_error = first_fix.map(|e| {
        let summary = evaluate_errors(
            std::slice::from_ref(e),
            &truth,
            config.localizer.eval_stride_m,
            Some(result.map.graph.length()),
        )
        .unwrap();
        summary.max_abs()
    });
    let pass = in_stripe > 0
        && all_dr
        && worst_delta <= 1e-9
        && fix_error.is_some_and(|e| e <= config.mapping.spacing_m);
    verdict(
        pass,
        format!(
            "{in_stripe} dead-reckoned updates over {:.0} m, max |estimate delta - odometer delta| {worst_delta:.1e} m (limit 1e-9); first fix after the stripe at {} with error {} (limit 0.1 m)",
            stripe.1 - stripe.0,
            first_fix.map_or("none".into(), |e| format!("{:.1} m", e.travel_distance)),
            fix_error.map_or("n/a".into(), |e| format!("{e:.3} m"))
        ),
    )
}

fn run_truth(config: &ScenarioConfig) -> Vec<(f64, f64)> {
    let scenario = terrainloc::scenario::Scenario::new(config.clone()).unwrap();
    scenario
        .simulate_pass(config.mapping.passes as u64)
        .unwrap()
        .truth
}

// ---------------------------------------------------------------- 8

fn simulator_checks() -> Verdict {
    let params = QuarterCarParams::default();

    // Smooth road so the discretization error is purely that of the integrator.
    let smooth = RoadInput::from_fn(25.0, 1e-4, |x| {
        0.02 * (2.0 * std::f64::consts::PI * x / 4.0).sin() + 0.01 * (x / 1.7).cos()
    })
    .unwrap();
    let wheel_path = |dt: f64| {
        let options = SimulationOptions {
            dt,
            start_distance: 0.0,
            noise: SensorNoise::default(),
            seed: 0,
            record_truth: true,
        };
        simulate_run(&smooth, &params, |_| 2.0, 10.0, &options)
            .unwrap()
            .truth
            .unwrap()
            .wheel_position
    };
    let coarse = wheel_path(4e-3);
    let mid = wheel_path(2e-3);
    let fine = wheel_path(1e-3);
    let (mut d1, mut d2) = (0.0f64, 0.0f64);
    for k in 0..coarse.len() {
        d1 = d1.max((coarse[k] - mid[2 * k]).abs());
        d2 = d2.max((mid[2 * k] - fine[4 * k]).abs());
    }
    let richardson = d1 / d2;

    // Step of 5 cm at 10 m, settled after 30 s.
    let step = RoadInput::from_fn(400.0, 0.05, |x| if x < 10.0 { 0.0 } else { 0.05 }).unwrap();
    let options = SimulationOptions {
        dt: 1e-3,
        start_distance: 0.0,
        noise: SensorNoise::default(),
        seed: 0,
        record_truth: true,
    };
    let run = simulate_run_with_force(&step, &params, |_| 10.0, |_| 0.0, 30.0, &options).unwrap();
    let truth = run.truth.unwrap();
    let last = truth.wheel_position.len() - 1;
    let wheel = truth.wheel_position[last];
    let body = wheel + truth.clean.shock_displacement[last];
    let tracking = (wheel - 0.05).abs().max((body - 0.05).abs());

    let road = generate_road(1000.0, 0.05, RoughnessClass::C, 5).unwrap();
    let identify = |accel: f64| {
        let options = SimulationOptions {
            dt: 1e-3,
            start_distance: 0.0,
            noise: SensorNoise {
                accel,
                ..SensorNoise::default()
            },
            seed: 3,
            record_truth: false,
        };
        let speed = |t: f64| 10.0 + 2.0 * (0.3 * t).sin();
        let run = simulate_run(&road, &params, speed, 60.0, &options).unwrap();
        let id = identify_parameters(&run.stream, &road, &IdentificationOptions::default()).unwrap();
        [
            (id.spring_rate / params.spring_rate - 1.0).abs(),
            (id.damping / params.damping - 1.0).abs(),
            (id.tire_rate / params.tire_rate - 1.0).abs(),
        ]
        .into_iter()
        .fold(0.0f64, f64::max)
    };
    let clean_err = identify(0.0);
    let noisy_err = identify(0.1);

    verdict(
        (richardson - 16.0).abs() <= 0.3 * 16.0
            && tracking <= 1e-6
            && clean_err <= 1e-3
            && noisy_err <= 0.05,
        format!(
            "Richardson ratio {richardson:.2} (limit 16 +/- 30%); step tracking error {tracking:.1e} m (limit 1e-6); identification worst relative error {:.4}% noiseless (limit 0.1%), {:.3}% at 0.1 m/s^2 (limit 5%)",
            100.0 * clean_err,
            100.0 * noisy_err
        ),
    )
}
