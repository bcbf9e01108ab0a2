use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use terrainloc::quarter_car::{
    generate_road, identify_parameters, simulate_run, IdentificationOptions, RoadInput,
    RoughnessClass, SensorNoise, SimulationOptions,
};
use terrainloc::{Error, QuarterCarParams};

fn clean(record_truth: bool) -> SimulationOptions {
    SimulationOptions {
        dt: 1e-3,
        start_distance: 0.0,
        noise: SensorNoise::default(),
        seed: 0,
        record_truth,
    }
}

/// Body displacement per unit road displacement at angular frequency `w`,
/// from the linear two-mass model.
fn body_gain(p: &QuarterCarParams, w: f64) -> f64 {
    let s = Complex::new(0.0, w);
    let coupling = p.damping * s + p.spring_rate;
    let a11 = p.body_mass * s * s + coupling;
    let a22 = p.wheel_mass * s * s + coupling + p.tire_rate;
    // [a11 -c; -c a22] [x1; x3] = [0; k_t r]
    let det = a11 * a22 - coupling * coupling;
    (coupling * p.tire_rate / det).norm()
}

#[test]
fn sinusoidal_road_matches_frequency_response() {
    let p = QuarterCarParams::default();
    let (amplitude, wavelength, speed) = (0.02, 5.0, 10.0);
    let road = RoadInput::from_fn(400.0, 1e-3, |x| {
        amplitude * (std::f64::consts::TAU * x / wavelength).sin()
    })
    .unwrap();
    let run = simulate_run(&road, &p, |_| speed, 30.0, &clean(true)).unwrap();
    let truth = run.truth.unwrap();
    let settled = truth.wheel_position.len() - 10_000;
    let body_peak = (settled..truth.wheel_position.len())
        .map(|i| (truth.wheel_position[i] + truth.clean.shock_displacement[i]).abs())
        .fold(0.0, f64::max);
    let expected = amplitude * body_gain(&p, std::f64::consts::TAU * speed / wavelength);
    assert!(
        (body_peak / expected - 1.0).abs() < 0.01,
        "body amplitude {body_peak}, frequency response {expected}"
    );
}

#[test]
fn generated_road_has_inverse_square_psd() {
    let spacing = 0.1;
    let road = generate_road(5000.0, spacing, RoughnessClass::C, 99).unwrap();
    let n = road.len();
    let mut buf: Vec<Complex<f64>> = road.heights().iter().map(|h| Complex::new(*h, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let length = n as f64 * spacing;
    let (mut sx, mut sy, mut sxx, mut sxy, mut count) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2).skip(1) {
        let freq = k as f64 / length;
        if !(0.01..=2.0).contains(&freq) {
            continue;
        }
        let x = freq.ln();
        let y = c.norm_sqr().ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        count += 1.0;
    }
    let slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    assert!((-2.2..=-1.8).contains(&slope), "slope {slope}");
}

#[test]
fn flat_road_without_force_is_rank_deficient() {
    let road = RoadInput::flat(200.0, 0.05).unwrap();
    let run = simulate_run(&road, &QuarterCarParams::default(), |_| 10.0, 10.0, &clean(false)).unwrap();
    let err = identify_parameters(&run.stream, &road, &IdentificationOptions::default()).unwrap_err();
    assert!(matches!(err, Error::RankDeficient { .. }), "{err}");
}

#[test]
fn same_seed_gives_byte_identical_streams() {
    let road = generate_road(500.0, 0.05, RoughnessClass::C, 2).unwrap();
    let options = SimulationOptions {
        noise: SensorNoise {
            accel: 0.05,
            shock_displacement: 1e-4,
            shock_velocity: 1e-3,
            force: 1.0,
            speed: 0.02,
        },
        seed: 42,
        ..clean(false)
    };
    let speed = |t: f64| 8.0 + (0.5 * t).sin();
    let a = simulate_run(&road, &QuarterCarParams::default(), speed, 20.0, &options).unwrap();
    let b = simulate_run(&road, &QuarterCarParams::default(), speed, 20.0, &options).unwrap();
    assert_eq!(a.stream.to_text(), b.stream.to_text());
}

#[test]
fn noisy_identification_is_within_five_percent() {
    let p = QuarterCarParams::default();
    let road = generate_road(800.0, 0.05, RoughnessClass::C, 31).unwrap();
    for seed in 0..3 {
        let options = SimulationOptions {
            noise: SensorNoise {
                accel: 0.1,
                ..SensorNoise::default()
            },
            seed,
            ..clean(false)
        };
        let run = simulate_run(&road, &p, |_| 12.0, 60.0, &options).unwrap();
        let id = identify_parameters(&run.stream, &road, &IdentificationOptions::default()).unwrap();
        for (est, truth) in [
            (id.spring_rate, p.spring_rate),
            (id.damping, p.damping),
            (id.tire_rate, p.tire_rate),
        ] {
            assert!((est / truth - 1.0).abs() < 0.05, "seed {seed}: {est} vs {truth}");
        }
    }
}
