//! Synthetic end-to-end benchmark: random vehicle scenes, all four radar
//! formats, the baseline detector, auto-labeling and AP evaluation.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autolabel::{autolabel_frame, tta_detection_sets, AutolabelParams, NoisyDetector};
use crate::config::RadarConfig;
use crate::dsp::{baseline_detect_boxes, baseline_detect_polar, BaselineParams};
use crate::error::{Error, Result};
use crate::eval::{average_precision, evaluate_formats, ApTable, PrCurve, DEFAULT_IOU_THRESHOLDS};
use crate::formats::{FormatOutput, FormatRegistry, FrameData, ProcessParams};
use crate::geometry::{nms, DEFAULT_NMS_IOU};
use crate::sim::{simulate_scene, Scene};
use crate::types::{BoxSet, DetectionSet, GroundTruthSet, OrientedBox};

pub const DEFAULT_CONFIDENCE: f64 = 0.5;

/// Response-filter threshold for the benchmark's img-music BEV images: true
/// boxes concentrate at 0.74 or more there, empty vehicle-sized regions at
/// 0.71 or less.
pub const DEMO_MIN_CONCENTRATION: f64 = 0.72;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub min_vehicles: usize,
    pub max_vehicles: usize,
    pub min_range: f64,
    pub max_range: f64,
    pub max_azimuth: f64,
    /// Minimum distance between vehicle centres, meters.
    pub min_separation: f64,
    pub vehicle_size: (f64, f64),
    /// Uniform relative jitter on both vehicle dimensions.
    pub size_jitter: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            min_vehicles: 1,
            max_vehicles: 4,
            min_range: 5.0,
            max_range: 30.0,
            max_azimuth: 60f64.to_radians(),
            min_separation: 8.0,
            vehicle_size: (1.8, 4.5),
            size_jitter: 0.1,
        }
    }
}

/// Seeded random scenes; vehicle centres are uniform in range and azimuth.
pub fn generate_scenes(params: &SceneParams, frames: usize, seed: u64) -> Result<Vec<Scene>> {
    if params.min_vehicles > params.max_vehicles || params.max_vehicles == 0 {
        return Err(Error::InvalidConfig("vehicle count range is empty".into()));
    }
    if !(params.min_range > 0.0 && params.min_range < params.max_range) {
        return Err(Error::InvalidConfig("vehicle range interval is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = Vec::with_capacity(frames);
    for frame_id in 0..frames as u64 {
        let count = rng.random_range(params.min_vehicles..=params.max_vehicles);
        let mut boxes: Vec<OrientedBox> = Vec::with_capacity(count);
        let mut attempts = 0;
        while boxes.len() < count {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::InvalidConfig("cannot place vehicles with this separation".into()));
            }
            let r = rng.random_range(params.min_range..params.max_range);
            let a = rng.random_range(-params.max_azimuth..=params.max_azimuth);
            let (x, y) = (r * a.cos(), r * a.sin());
            if boxes.iter().any(|b| (b.cx - x).hypot(b.cy - y) < params.min_separation) {
                continue;
            }
            let j = params.size_jitter;
            let w = params.vehicle_size.0 * (1.0 + rng.random_range(-j..=j));
            let h = params.vehicle_size.1 * (1.0 + rng.random_range(-j..=j));
            let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            boxes.push(OrientedBox::new(x, y, w, h, theta));
        }
        scenes.push(Scene {
            frame_id,
            boxes,
            seed: rng.random(),
            ..Scene::default()
        });
    }
    Ok(scenes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub polar: BaselineParams,
    pub bev: BaselineParams,
    pub confidence: f64,
    pub nms_iou: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            polar: BaselineParams::default(),
            bev: BaselineParams::default(),
            confidence: DEFAULT_CONFIDENCE,
            nms_iou: DEFAULT_NMS_IOU,
        }
    }
}

/// Baseline detection on either grid, then confidence filter and NMS.
pub fn detect_output(output: &FormatOutput, params: &DetectorParams, frame_id: u64) -> Result<DetectionSet> {
    let raw = match output {
        FormatOutput::Polar(m) => baseline_detect_polar(m, &params.polar)?,
        FormatOutput::Bev(b) => baseline_detect_boxes(b, &params.bev)?,
    };
    Ok(postprocess(&raw, params.confidence, params.nms_iou, frame_id))
}

pub fn postprocess(raw: &DetectionSet, confidence: f64, nms_iou: f64, frame_id: u64) -> DetectionSet {
    let kept: Vec<OrientedBox> = raw
        .boxes
        .iter()
        .filter(|b| b.score_or_zero() >= confidence)
        .copied()
        .collect();
    let mut out = nms(&BoxSet::new(frame_id, kept), nms_iou);
    out.frame_id = frame_id;
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub frames: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub scenes: SceneParams,
    pub radar: RadarConfig,
    pub process: ProcessParams,
    pub detector: DetectorParams,
    pub iou_thresholds: Vec<f64>,
    /// Format whose BEV image feeds the response filter; `None` skips
    /// auto-labeling.
    pub autolabel_format: Option<String>,
    pub autolabel: AutolabelParams,
    pub noisy_detectors: [NoisyDetector; 2],
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            frames: 50,
            seed: 0,
            snr_db: 20.0,
            scenes: SceneParams::default(),
            radar: RadarConfig::default(),
            process: ProcessParams::default(),
            detector: DetectorParams::default(),
            iou_thresholds: DEFAULT_IOU_THRESHOLDS.to_vec(),
            autolabel_format: Some("img-music".into()),
            autolabel: AutolabelParams { min_concentration: DEMO_MIN_CONCENTRATION, ..Default::default() },
            noisy_detectors: [NoisyDetector::default(); 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub ground_truth: GroundTruthSet,
    pub detections: BTreeMap<String, DetectionSet>,
    pub autolabel: Option<GroundTruthSet>,
    pub timings_ms: BTreeMap<String, f64>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Simulates one scene and runs every registered format through detection;
/// the stage name is attached to any error.
pub fn run_frame(
    scene: &Scene,
    config: &DemoConfig,
    registry: &FormatRegistry,
) -> std::result::Result<FrameResult, (String, Error)> {
    let mut timings = BTreeMap::new();
    let t = Instant::now();
    let cube = simulate_scene(scene, &config.radar, Some(config.snr_db))
        .map_err(|e| ("simulate".to_string(), e))?;
    timings.insert("simulate".into(), ms(t));
    let frame = FrameData::new(&cube, &config.process);
    let mut detections = BTreeMap::new();
    let mut autolabel_bev = None;
    let (mut process_ms, mut detect_ms) = (0.0, 0.0);
    for name in registry.names() {
        let t = Instant::now();
        let output = registry
            .get(name)
            .and_then(|f| f.process(&frame))
            .map_err(|e| (format!("process:{name}"), e))?;
        process_ms += ms(t);
        let t = Instant::now();
        let dets = detect_output(&output, &config.detector, scene.frame_id)
            .map_err(|e| (format!("detect:{name}"), e))?;
        detect_ms += ms(t);
        detections.insert(name.to_string(), dets);
        if config.autolabel_format.as_deref() == Some(name) {
            if let FormatOutput::Bev(b) = output {
                autolabel_bev = Some(b);
            }
        }
    }
    timings.insert("process".into(), process_ms);
    timings.insert("detect".into(), detect_ms);
    let ground_truth = BoxSet::new(scene.frame_id, scene.boxes.clone());
    let autolabel = match (&config.autolabel_format, autolabel_bev) {
        (None, _) => None,
        (Some(name), None) => {
            return Err((
                "autolabel".into(),
                Error::InvalidConfig(format!("auto-label format {name:?} is not a BEV format")),
            ))
        }
        (Some(_), Some(bev)) => {
            let t = Instant::now();
            let sets = tta_detection_sets(&ground_truth, &config.noisy_detectors, scene.seed ^ 0x5EED);
            let labels = autolabel_frame(&sets, &bev, &config.autolabel)
                .map_err(|e| ("autolabel".to_string(), e))?;
            timings.insert("autolabel".into(), ms(t));
            Some(labels)
        }
    };
    Ok(FrameResult { ground_truth, detections, autolabel, timings_ms: timings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutolabelSummary {
    pub labels: usize,
    pub true_boxes: usize,
    /// Fraction of labels matching a true box at IoU 0.5.
    pub precision: f64,
    /// Fraction of true boxes recovered at IoU 0.5.
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub table: ApTable,
    pub curves: Vec<(String, PrCurve)>,
    pub frames: Vec<FrameResult>,
    pub autolabel: Option<AutolabelSummary>,
    pub timings_ms: BTreeMap<String, f64>,
}

fn summarize_autolabel(frames: &[FrameResult]) -> Result<Option<AutolabelSummary>> {
    let mut labels = Vec::new();
    let mut truth = Vec::new();
    for f in frames {
        let Some(l) = &f.autolabel else { return Ok(None) };
        let mut scored = l.clone();
        for b in &mut scored.boxes {
            b.score = Some(1.0);
        }
        labels.push(scored);
        truth.push(f.ground_truth.clone());
    }
    let num_labels: usize = labels.iter().map(BoxSet::len).sum();
    let true_boxes: usize = truth.iter().map(BoxSet::len).sum();
    let curve = average_precision(&labels, &truth, 0.5)?;
    let tp = curve.points.last().map_or(0.0, |p| p.recall * true_boxes as f64);
    Ok(Some(AutolabelSummary {
        labels: num_labels,
        true_boxes,
        precision: if num_labels > 0 { tp / num_labels as f64 } else { 0.0 },
        recall: tp / true_boxes as f64,
    }))
}

/// Runs the full benchmark. Frames are processed in parallel on the
/// current rayon pool; results are ordered by frame.
pub fn run_demo(config: &DemoConfig) -> std::result::Result<DemoReport, (String, Error)> {
    let total = Instant::now();
    let registry = FormatRegistry::default();
    let scenes = generate_scenes(&config.scenes, config.frames, config.seed)
        .map_err(|e| ("scenes".to_string(), e))?;
    let frames: Vec<FrameResult> = scenes
        .par_iter()
        .map(|s| run_frame(s, config, &registry))
        .collect::<std::result::Result<_, _>>()?;
    let t = Instant::now();
    let gts: Vec<GroundTruthSet> = frames.iter().map(|f| f.ground_truth.clone()).collect();
    let mut results: BTreeMap<String, Vec<DetectionSet>> = BTreeMap::new();
    for f in &frames {
        for (name, d) in &f.detections {
            results.entry(name.clone()).or_default().push(d.clone());
        }
    }
    let (table, curves) = evaluate_formats(&results, &gts, &config.iou_thresholds)
        .map_err(|e| ("eval".to_string(), e))?;
    let autolabel = summarize_autolabel(&frames).map_err(|e| ("autolabel".to_string(), e))?;
    let mut timings = BTreeMap::new();
    for f in &frames {
        for (k, v) in &f.timings_ms {
            *timings.entry(k.clone()).or_insert(0.0) += v;
        }
    }
    timings.insert("eval".into(), ms(t));
    timings.insert("wall".into(), ms(total));
    Ok(DemoReport { table, curves, frames, autolabel, timings_ms: timings })
}
