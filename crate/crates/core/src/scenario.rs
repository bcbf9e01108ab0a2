//! The reference synthetic experiment: a closed loop of rough road, several
//! mapping passes, and one live pass to localize.
//!
//! Everything is driven by a [`ScenarioConfig`] (TOML, units in key names)
//! and a seed, so every stage is reproducible.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::fsutil::write_atomic;
use crate::localizer::{
    evaluate_errors, run_localizer, ErrorSummary, Estimate, Localizer, LocalizerConfig,
    MasterPitch, RunOptions, Snapshot, Status,
};
use crate::matching::Correlator;
use crate::pitch::{CornerProfiles, VehicleGeometry};
use crate::quarter_car::{
    generate_road, simulate_run, QuarterCarParams, RoadInput, RoughnessClass, SensorNoise,
    SensorStream, SimulationOptions,
};
use crate::reconstruction::{estimate_road_profile, ReconstructionConfig};
use crate::resample::convert_time_to_distance;
use crate::terrain_map::{
    extract_stretches, interpolate_trace, read_trace, snap_trace, trace_to_text, GraphMap,
    LocalFrame, MatchOptions, Node, StretchReport, TerrainMap, TracePoint,
};
use crate::textio::{data_lines, parse_row, read_to_string};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub road: RoadConfig,
    pub vehicle: VehicleConfig,
    pub drive: DriveConfig,
    pub noise: NoiseConfig,
    pub mapping: MappingConfig,
    pub localizer: LocalizerSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            road: RoadConfig::default(),
            vehicle: VehicleConfig::default(),
            drive: DriveConfig::default(),
            noise: NoiseConfig::default(),
            mapping: MappingConfig::default(),
            localizer: LocalizerSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadConfig {
    pub loop_length_m: f64,
    pub spacing_m: f64,
    pub roughness_class: RoughnessClass,
    /// Number of polygon corners of the loop.
    pub nodes: usize,
    pub center_lat_deg: f64,
    pub center_lon_deg: f64,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self {
            loop_length_m: 4200.0,
            spacing_m: 0.05,
            roughness_class: RoughnessClass::C,
            nodes: 10,
            center_lat_deg: 48.137,
            center_lon_deg: 11.575,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    pub body_mass_kg: f64,
    pub wheel_mass_kg: f64,
    pub spring_rate_n_per_m: f64,
    pub tire_rate_n_per_m: f64,
    pub damping_n_s_per_m: f64,
    pub actuator_force_limit_n: f64,
    pub wheelbase_m: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        let p = QuarterCarParams::default();
        Self {
            body_mass_kg: p.body_mass,
            wheel_mass_kg: p.wheel_mass,
            spring_rate_n_per_m: p.spring_rate,
            tire_rate_n_per_m: p.tire_rate,
            damping_n_s_per_m: p.damping,
            actuator_force_limit_n: p.actuator_force_limit,
            wheelbase_m: VehicleGeometry::default().wheelbase,
        }
    }
}

impl VehicleConfig {
    pub fn params(&self) -> QuarterCarParams {
        QuarterCarParams {
            body_mass: self.body_mass_kg,
            wheel_mass: self.wheel_mass_kg,
            spring_rate: self.spring_rate_n_per_m,
            tire_rate: self.tire_rate_n_per_m,
            damping: self.damping_n_s_per_m,
            actuator_force_limit: self.actuator_force_limit_n,
        }
    }

    pub fn geometry(&self) -> Result<VehicleGeometry> {
        VehicleGeometry::new(self.wheelbase_m)
    }
}

/// Speed `mean + amplitude * sin(2π t / period)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub speed_mps: f64,
    pub speed_amplitude_mps: f64,
    pub speed_period_s: f64,
    /// Distance driven per pass, m.
    pub pass_length_m: f64,
    pub dt_s: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            speed_mps: 10.0,
            speed_amplitude_mps: 0.0,
            speed_period_s: 60.0,
            pass_length_m: 4200.0,
            dt_s: 1e-3,
        }
    }
}

impl DriveConfig {
    pub fn speed_at(&self, t: f64) -> f64 {
        if self.speed_amplitude_mps == 0.0 {
            self.speed_mps
        } else {
            self.speed_mps
                + self.speed_amplitude_mps * (std::f64::consts::TAU * t / self.speed_period_s).sin()
        }
    }

    pub fn duration(&self) -> f64 {
        self.pass_length_m / self.speed_mps
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub accel_mps2: f64,
    pub shock_displacement_m: f64,
    pub shock_velocity_mps: f64,
    pub force_n: f64,
    /// Shared by all four corners.
    pub speed_mps: f64,
    /// Per horizontal axis.
    pub gps_m: f64,
    pub gps_rate_hz: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            accel_mps2: 0.05,
            shock_displacement_m: 1e-4,
            shock_velocity_mps: 1e-3,
            force_n: 1.0,
            speed_mps: 0.02,
            gps_m: 3.0,
            gps_rate_hz: 1.0,
        }
    }
}

impl NoiseConfig {
    /// All sensor and GPS noise switched off.
    pub fn none() -> Self {
        Self {
            accel_mps2: 0.0,
            shock_displacement_m: 0.0,
            shock_velocity_mps: 0.0,
            force_n: 0.0,
            speed_mps: 0.0,
            gps_m: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    pub passes: usize,
    pub spacing_m: f64,
    pub highpass_cutoff_hz: f64,
    pub margin_m: f64,
    pub ratio_threshold: f64,
    pub exclusion_cells: usize,
    pub bootstrap_fraction: f64,
    pub anchor_gain: f64,
    pub gps_smoothing_half_window_m: f64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        let m = MatchOptions::default();
        Self {
            passes: 3,
            spacing_m: 0.1,
            highpass_cutoff_hz: 0.5,
            margin_m: m.margin,
            ratio_threshold: m.ratio_threshold,
            exclusion_cells: m.exclusion_halfwidth,
            bootstrap_fraction: m.bootstrap_fraction,
            anchor_gain: m.anchor_gain,
            gps_smoothing_half_window_m: 1000.0,
        }
    }
}

impl MappingConfig {
    pub fn match_options(&self) -> MatchOptions {
        MatchOptions {
            margin: self.margin_m,
            ratio_threshold: self.ratio_threshold,
            exclusion_halfwidth: self.exclusion_cells,
            bootstrap_fraction: self.bootstrap_fraction,
            anchor_gain: self.anchor_gain,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizerSection {
    pub buffer_length_m: f64,
    pub window_length_m: f64,
    pub subbuffer_length_m: f64,
    pub subwindow_length_m: f64,
    pub ratio_threshold: f64,
    pub update_stride_m: f64,
    pub exclusion_cells: usize,
    pub lost_after_m: f64,
    pub initial_window_factor: f64,
    pub max_uninitialized_fraction: f64,
    pub refine: bool,
    pub eval_stride_m: f64,
    /// Odometer distances at which correlation traces are dumped.
    pub snapshot_at_m: Vec<f64>,
}

impl Default for LocalizerSection {
    fn default() -> Self {
        let l = LocalizerConfig::default();
        Self {
            buffer_length_m: l.buffer_length,
            window_length_m: l.window_length,
            subbuffer_length_m: l.subbuffer_length,
            subwindow_length_m: l.subwindow_length,
            ratio_threshold: l.ratio_threshold,
            update_stride_m: l.update_stride,
            exclusion_cells: l.exclusion_halfwidth,
            lost_after_m: l.lost_after,
            initial_window_factor: l.initial_window_factor,
            max_uninitialized_fraction: l.max_uninitialized,
            refine: l.refine,
            eval_stride_m: 10.0,
            snapshot_at_m: Vec::new(),
        }
    }
}

impl LocalizerSection {
    pub fn config(&self) -> LocalizerConfig {
        LocalizerConfig {
            buffer_length: self.buffer_length_m,
            window_length: self.window_length_m,
            subbuffer_length: self.subbuffer_length_m,
            subwindow_length: self.subwindow_length_m,
            ratio_threshold: self.ratio_threshold,
            update_stride: self.update_stride_m,
            exclusion_halfwidth: self.exclusion_cells,
            lost_after: self.lost_after_m,
            initial_window_factor: self.initial_window_factor,
            max_uninitialized: self.max_uninitialized_fraction,
            refine: self.refine,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (_, text) = read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let r = &self.road;
        if !(r.loop_length_m > 0.0 && r.spacing_m > 0.0 && r.spacing_m < r.loop_length_m) {
            return bad("road.loop_length_m and road.spacing_m must be positive");
        }
        if r.nodes < 3 {
            return bad("road.nodes must be at least 3");
        }
        if !(r.center_lat_deg.abs() < 80.0 && r.center_lon_deg.abs() <= 180.0) {
            return bad("road center out of range");
        }
        self.vehicle.params().validate()?;
        self.vehicle.geometry()?;
        let d = &self.drive;
        if !(d.speed_mps > 0.0 && d.speed_amplitude_mps >= 0.0 && d.speed_amplitude_mps < d.speed_mps)
        {
            return bad("drive speed must stay positive");
        }
        if !(d.pass_length_m > 0.0 && d.dt_s > 0.0 && d.speed_period_s > 0.0) {
            return bad("drive.pass_length_m, drive.dt_s and drive.speed_period_s must be positive");
        }
        let n = &self.noise;
        let noise = [
            n.accel_mps2,
            n.shock_displacement_m,
            n.shock_velocity_mps,
            n.force_n,
            n.speed_mps,
            n.gps_m,
        ];
        if noise.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(n.gps_rate_hz > 0.0) {
            return bad("noise levels must be non-negative and gps_rate_hz positive");
        }
        let m = &self.mapping;
        if m.passes == 0 {
            return bad("mapping.passes must be at least 1");
        }
        if !(m.spacing_m > 0.0 && m.highpass_cutoff_hz > 0.0) {
            return bad("mapping.spacing_m and mapping.highpass_cutoff_hz must be positive");
        }
        if !(m.ratio_threshold > 0.0 && m.ratio_threshold < 1.0) {
            return bad("mapping.ratio_threshold must lie in (0, 1)");
        }
        if m.exclusion_cells == 0 || self.localizer.exclusion_cells == 0 {
            return bad("exclusion_cells must be at least 1");
        }
        self.localizer.config().validate()?;
        if !(self.localizer.eval_stride_m > 0.0) {
            return bad("localizer.eval_stride_m must be positive");
        }
        Ok(())
    }

    pub fn reconstruction(&self) -> ReconstructionConfig {
        ReconstructionConfig {
            highpass_cutoff: self.mapping.highpass_cutoff_hz,
            params: self.vehicle.params(),
            ..ReconstructionConfig::default()
        }
    }

    /// Sensor noise for one corner; speed noise is added once per pass.
    pub fn sensor_noise(&self) -> SensorNoise {
        SensorNoise {
            accel: self.noise.accel_mps2,
            shock_displacement: self.noise.shock_displacement_m,
            shock_velocity: self.noise.shock_velocity_mps,
            force: self.noise.force_n,
            speed: 0.0,
        }
    }
}

/// Independent seed for a named sub-stream (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_ROAD_LEFT: u64 = 1;
const STREAM_ROAD_RIGHT: u64 = 2;
const STREAM_PASS: u64 = 3;
const STREAM_CORNER: u64 = 4;

/// Corner order used for stream files and arrays.
pub const CORNERS: [&str; 4] = ["fl", "fr", "rl", "rr"];

/// Loop polygon with `nodes` corners, centered at the configured point,
/// scaled so its perimeter is exactly `loop_length_m`.
pub fn loop_graph(road: &RoadConfig) -> Result<GraphMap> {
    let k = road.nodes;
    let raw: Vec<[f64; 2]> = (0..k)
        .map(|i| {
            let theta = std::f64::consts::TAU * i as f64 / k as f64;
            let r = 1.0 + 0.15 * (3.0 * theta + 0.4).sin();
            [r * theta.cos(), r * theta.sin()]
        })
        .collect();
    let mean = [
        raw.iter().map(|p| p[0]).sum::<f64>() / k as f64,
        raw.iter().map(|p| p[1]).sum::<f64>() / k as f64,
    ];
    let perimeter: f64 = (0..k)
        .map(|i| {
            let (a, b) = (raw[i], raw[(i + 1) % k]);
            (b[0] - a[0]).hypot(b[1] - a[1])
        })
        .sum();
    let scale = road.loop_length_m / perimeter;
    let frame = LocalFrame::new(road.center_lat_deg, road.center_lon_deg);
    let nodes = raw
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let g = frame.to_gps([(p[0] - mean[0]) * scale, (p[1] - mean[1]) * scale]);
            Node {
                id: i as u64,
                lat: g.lat,
                lon: g.lon,
            }
        })
        .collect();
    GraphMap::from_nodes(nodes, true)
}

/// Recorded data of one drive around the loop.
#[derive(Clone, Debug, PartialEq)]
pub struct PassData {
    /// Streams in [`CORNERS`] order.
    pub streams: [SensorStream; 4],
    pub gps: Vec<TracePoint>,
    /// (odometer, true unwrapped route position of the front axle).
    pub truth: Vec<(f64, f64)>,
}

impl PassData {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, s) in CORNERS.iter().zip(&self.streams) {
            write_atomic(&dir.join(format!("{name}.csv")), s.to_text().as_bytes())?;
        }
        write_atomic(&dir.join("gps.csv"), trace_to_text(&self.gps).as_bytes())?;
        write_atomic(&dir.join("truth.csv"), truth_to_text(&self.truth).as_bytes())?;
        Ok(())
    }

    /// Reads a pass directory; `truth.csv` is optional.
    pub fn read(dir: &Path) -> Result<Self> {
        let read = |name: &str| SensorStream::read(&dir.join(format!("{name}.csv")));
        let streams = [read("fl")?, read("fr")?, read("rl")?, read("rr")?];
        let gps = read_trace(&dir.join("gps.csv"))?;
        let truth_path = dir.join("truth.csv");
        let truth = if truth_path.exists() {
            read_truth(&truth_path)?
        } else {
            Vec::new()
        };
        Ok(Self {
            streams,
            gps,
            truth,
        })
    }
}

pub fn truth_to_text(truth: &[(f64, f64)]) -> String {
    let mut out = String::with_capacity(truth.len() * 40);
    out.push_str("distance,route_position\n");
    for (d, p) in truth {
        out.push_str(&format!("{d},{p}\n"));
    }
    out
}

pub fn read_truth(path: &Path) -> Result<Vec<(f64, f64)>> {
    let (p, text) = read_to_string(path)?;
    let mut out = Vec::new();
    for (ln, line) in data_lines(&text) {
        if line.starts_with("distance") {
            continue;
        }
        let row = parse_row(&p, ln, line, 2)?;
        out.push((row[0], row[1]));
    }
    Ok(out)
}

/// Loop geometry and the two wheel-track road profiles.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub graph: GraphMap,
    pub left: RoadInput,
    pub right: RoadInput,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let graph = loop_graph(&config.road)?;
        let r = &config.road;
        let left = generate_road(
            r.loop_length_m,
            r.spacing_m,
            r.roughness_class,
            derive_seed(config.seed, STREAM_ROAD_LEFT, 0),
        )?;
        let right = generate_road(
            r.loop_length_m,
            r.spacing_m,
            r.roughness_class,
            derive_seed(config.seed, STREAM_ROAD_RIGHT, 0),
        )?;
        Ok(Self {
            config,
            graph,
            left,
            right,
        })
    }

    pub fn geometry(&self) -> VehicleGeometry {
        self.config.vehicle.geometry().expect("validated")
    }

    /// Drives pass `index` from a random start on the loop. The vehicle
    /// position is the front axle; rear wheels trail by the wheelbase.
    pub fn simulate_pass(&self, index: u64) -> Result<PassData> {
        let cfg = &self.config;
        let seed = derive_seed(cfg.seed, STREAM_PASS, index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = rng.gen_range(0.0..cfg.road.loop_length_m);
        let lb = cfg.vehicle.wheelbase_m;
        let params = cfg.vehicle.params();
        let drive = cfg.drive.clone();
        let duration = drive.duration();

        let mut streams = Vec::with_capacity(4);
        let mut truth_distance = Vec::new();
        for (c, name) in CORNERS.iter().enumerate() {
            let road = if name.ends_with('l') { &self.left } else { &self.right };
            let offset = if name.starts_with('r') { -lb } else { 0.0 };
            let options = SimulationOptions {
                dt: drive.dt_s,
                start_distance: start + offset,
                noise: cfg.sensor_noise(),
                seed: derive_seed(seed, STREAM_CORNER, c as u64),
                record_truth: c == 0,
            };
            let run = simulate_run(road, &params, |t| drive.speed_at(t), duration, &options)?;
            if let Some(t) = run.truth {
                truth_distance = t.distance;
            }
            streams.push(run.stream);
        }

        let n = streams[0].len();
        let dt = drive.dt_s;
        let speed_noise = (cfg.noise.speed_mps > 0.0)
            .then(|| Normal::new(0.0, cfg.noise.speed_mps).expect("validated"));
        let speed: Vec<f64> = streams[0]
            .speed
            .iter()
            .map(|v| match &speed_noise {
                Some(d) => (v + d.sample(&mut rng)).max(0.0),
                None => *v,
            })
            .collect();
        for s in &mut streams {
            s.speed.clone_from(&speed);
        }
        let mut odometer = Vec::with_capacity(n);
        let mut d = 0.0;
        for i in 0..n {
            if i > 0 {
                d += 0.5 * (speed[i - 1] + speed[i]) * dt;
            }
            odometer.push(d);
        }

        let frame = *self.graph.frame();
        let gps_noise = (cfg.noise.gps_m > 0.0).then(|| Normal::new(0.0, cfg.noise.gps_m).expect("validated"));
        let gps_every = ((1.0 / cfg.noise.gps_rate_hz) / dt).round().max(1.0) as usize;
        let mut gps = Vec::with_capacity(n / gps_every + 1);
        for i in (0..n).step_by(gps_every) {
            let mut xy = self.graph.point_at(start + truth_distance[i]);
            if let Some(noise) = &gps_noise {
                xy[0] += noise.sample(&mut rng);
                xy[1] += noise.sample(&mut rng);
            }
            let mut point = frame.to_gps(xy);
            point.noise_std = Some(cfg.noise.gps_m);
            gps.push(TracePoint {
                distance: odometer[i],
                point,
            });
        }
        let truth_every = ((0.1 / dt).round() as usize).max(1);
        let mut truth: Vec<(f64, f64)> = (0..n)
            .step_by(truth_every)
            .map(|i| (odometer[i], start + truth_distance[i]))
            .collect();
        if (n - 1) % truth_every != 0 {
            truth.push((odometer[n - 1], start + truth_distance[n - 1]));
        }
        let streams: [SensorStream; 4] = streams.try_into().expect("four corners");
        Ok(PassData {
            streams,
            gps,
            truth,
        })
    }
}

/// Reconstructs, resamples and aligns the four corners of a pass, dropping
/// the high-pass warm-up at the start.
pub fn process_pass(streams: &[SensorStream; 4], config: &ScenarioConfig) -> Result<CornerProfiles> {
    let recon = config.reconstruction();
    let spacing = config.mapping.spacing_m;
    let mut profiles = Vec::with_capacity(4);
    for s in streams {
        let time_profile = estimate_road_profile(s, &recon)?;
        let distance = convert_time_to_distance(&time_profile, spacing)?;
        let warmup = odometer_at(s, time_profile.transient_until);
        let first = ((warmup / spacing) - 1e-9).ceil().max(0.0) as usize;
        if first + 2 >= distance.len() {
            return Err(Error::EmptyProfile("pass shorter than the filter warm-up".into()));
        }
        profiles.push(distance.crop_cells(first, distance.len() - first));
    }
    let [fl, fr, rl, rr]: [_; 4] = profiles.try_into().expect("four corners");
    CornerProfiles::aligned(fl, fr, rl, rr)
}

/// Trapezoidal odometer of `stream` at time `t`.
fn odometer_at(stream: &SensorStream, t: f64) -> f64 {
    let mut d = 0.0;
    for i in 1..stream.len() {
        if stream.time[i] > t {
            break;
        }
        d += 0.5 * (stream.speed[i - 1] + stream.speed[i]) * (stream.time[i] - stream.time[i - 1]);
    }
    d
}

/// Adds one processed pass to `map`.
pub fn merge_pass(
    map: &mut TerrainMap,
    pass: &PassData,
    source: u32,
    config: &ScenarioConfig,
    correlator: &mut Correlator,
) -> Result<Vec<StretchReport>> {
    let corners = process_pass(&pass.streams, config)?;
    let heights = corners.front_axle_height();
    let trace = snap_trace(&pass.gps, &map.graph, config.mapping.gps_smoothing_half_window_m)?;
    let stretches = extract_stretches(&heights, &trace, source)?;
    let geometry = config.vehicle.geometry()?;
    map.add_run(&stretches, &geometry, &config.mapping.match_options(), correlator)
}

/// Builds a map from `passes` in order.
pub fn build_map(
    graph: &GraphMap,
    passes: &[PassData],
    config: &ScenarioConfig,
) -> Result<(TerrainMap, Vec<StretchReport>)> {
    let mut map = TerrainMap::new(graph.clone(), config.mapping.spacing_m)?;
    let mut correlator = Correlator::new();
    let mut report = Vec::new();
    for (i, pass) in passes.iter().enumerate() {
        report.extend(merge_pass(&mut map, pass, i as u32, config, &mut correlator)?);
    }
    Ok((map, report))
}

#[derive(Clone, Debug)]
pub struct LocalizationRun {
    pub estimates: Vec<Estimate>,
    pub snapshots: Vec<Snapshot>,
    /// Updates after the buffer first filled.
    pub active_updates: usize,
    /// Share of active updates with status MATCHED.
    pub match_rate: f64,
    pub errors: Option<ErrorSummary>,
}

/// Localizes a live pass against `map`.
///
/// The a-priori position comes from the live pass's own map-matched GPS at
/// the first processed cell; ground truth is used only for evaluation.
pub fn localize_pass(
    map: &TerrainMap,
    pass: &PassData,
    config: &ScenarioConfig,
    options: &RunOptions,
) -> Result<LocalizationRun> {
    let geometry = config.vehicle.geometry()?;
    let corners = process_pass(&pass.streams, config)?;
    let spacing = corners.front_left.spacing;
    if (spacing - map.spacing()).abs() > 1e-9 * spacing {
        return Err(Error::invalid(format!(
            "live spacing {spacing} differs from map spacing {}",
            map.spacing()
        )));
    }
    let master = MasterPitch::from_map(map, &geometry)?;
    let trace = snap_trace(&pass.gps, &map.graph, config.mapping.gps_smoothing_half_window_m)?;
    let stride = config.localizer.update_stride_m;
    let first_update = corners.front_left.start_offset + stride - spacing;
    let prior_point = interpolate_trace(&trace, first_update.max(trace[0].distance))?;
    let prior = map.graph.project_gps(&prior_point)?.route_position;

    let mut localizer = Localizer::new(config.localizer.config(), geometry, spacing, prior)?;
    let mut options = options.clone();
    if options.snapshot_at.is_empty() {
        options.snapshot_at.clone_from(&config.localizer.snapshot_at_m);
    }
    let out = run_localizer(&mut localizer, &corners, &master, &options)?;
    let full_at = corners.front_left.start_offset + config.localizer.buffer_length_m - 1.5 * spacing;
    let active: Vec<&Estimate> = out
        .estimates
        .iter()
        .filter(|e| e.travel_distance >= full_at)
        .collect();
    let matched = active.iter().filter(|e| e.status == Status::Matched).count();
    let errors = if pass.truth.len() >= 2 {
        Some(evaluate_errors(
            &out.estimates,
            &pass.truth,
            config.localizer.eval_stride_m,
            map.graph.is_closed().then(|| map.graph.length()),
        )?)
    } else {
        None
    };
    Ok(LocalizationRun {
        active_updates: active.len(),
        match_rate: if active.is_empty() {
            0.0
        } else {
            matched as f64 / active.len() as f64
        },
        estimates: out.estimates,
        snapshots: out.snapshots,
        errors,
    })
}

/// Outcome of the full reference experiment.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub map: TerrainMap,
    pub report: Vec<StretchReport>,
    pub localization: LocalizationRun,
}

/// Simulates `mapping.passes` mapping passes and one live pass, builds the
/// map, and localizes the live pass.
pub fn run_experiment(config: &ScenarioConfig, options: &RunOptions) -> Result<ExperimentResult> {
    let scenario = Scenario::new(config.clone())?;
    let mut map = TerrainMap::new(scenario.graph.clone(), config.mapping.spacing_m)?;
    let mut correlator = Correlator::new();
    let mut report = Vec::new();
    for i in 0..config.mapping.passes {
        let pass = scenario.simulate_pass(i as u64)?;
        report.extend(merge_pass(&mut map, &pass, i as u32, config, &mut correlator)?);
    }
    let live = scenario.simulate_pass(config.mapping.passes as u64)?;
    let localization = localize_pass(&map, &live, config, options)?;
    Ok(ExperimentResult {
        map,
        report,
        localization,
    })
}
