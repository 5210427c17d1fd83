use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use log::info;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use radar_obb::autolabel::{autolabel_frame, tta_detection_sets, AutolabelParams, NoisyDetector};
use radar_obb::detmath::{fit_toy_head, make_toy_dataset, ToyConfig};
use radar_obb::dsp::{BaselineParams, BevParams, CfarParams};
use radar_obb::eval::{average_precision, ApRow, ApTable, PrCurve, DEFAULT_IOU_THRESHOLDS};
use radar_obb::formats::{FormatOutput, FormatRegistry, FrameData, ProcessParams};
use radar_obb::io;
use radar_obb::pipeline::{postprocess, run_demo, DemoConfig, SceneParams};
use radar_obb::sim::{simulate_scene, Scene};
use radar_obb::{BoxSet, RadarConfig};

use crate::manifest::{manifest_path_for_file, RunManifest};
use crate::{
    AutolabelArgs, Cli, Command, DemoArgs, DetectArgs, EvalArgs, FitDemoArgs, ProcessArgs, SimulateArgs,
};

/// An error tagged with the pipeline stage that produced it.
#[derive(Debug)]
pub struct StageError {
    pub stage: String,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(self.source.as_ref())
    }
}

fn stage<T, E: Into<anyhow::Error>>(name: &str, r: Result<T, E>) -> anyhow::Result<T> {
    r.map_err(|e| {
        anyhow::Error::new(StageError {
            stage: name.to_string(),
            source: e.into(),
        })
    })
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: String,
    stage: &'a str,
    causes: Vec<String>,
}

pub fn error_json(stage_name: &str, e: &anyhow::Error) -> String {
    let root = match e.downcast_ref::<StageError>() {
        Some(s) => &s.source,
        None => e,
    };
    let report = ErrorReport {
        error: root.to_string(),
        stage: stage_name,
        causes: root.chain().skip(1).map(|c| c.to_string()).collect(),
    };
    serde_json::to_string(&report).unwrap_or_else(|_| format!("{{\"error\":{:?}}}", root.to_string()))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return stage("args", Err(anyhow!("--workers must be >= 1")));
        }
        stage("args", rayon::ThreadPoolBuilder::new().num_threads(n).build_global())?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Process(a) => process(a),
        Command::Detect(a) => detect(a),
        Command::Autolabel(a) => autolabel(a),
        Command::FitDemo(a) => fit_demo(a),
        Command::Eval(a) => eval(a),
        Command::Demo(a) => demo(a),
    }
}

/// Strict JSON load with `file:line:column` and field-path diagnostics.
fn load_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_json(path, &text)
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> anyhow::Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        anyhow!(
            "{}:{}:{}: at `{}`: {}",
            path.display(),
            inner.line(),
            inner.column(),
            e.path(),
            inner
        )
    })
}

fn load_radar(path: Option<&PathBuf>) -> anyhow::Result<RadarConfig> {
    let cfg = match path {
        Some(p) => load_json(p)?,
        None => RadarConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_scenes(path: &Path) -> anyhow::Result<Vec<Scene>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('[') {
        parse_json(path, &text)
    } else {
        Ok(vec![parse_json(path, &text)?])
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// `frame_<digits>` prefix of a file name, if any.
pub fn frame_id_from_path(path: &Path) -> Option<u64> {
    let name = path.file_name()?.to_str()?;
    let rest = name.strip_prefix("frame_")?;
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

fn frame_ids(paths: &[PathBuf]) -> anyhow::Result<Vec<u64>> {
    let ids: Vec<u64> = paths
        .iter()
        .enumerate()
        .map(|(i, p)| frame_id_from_path(p).unwrap_or(i as u64))
        .collect();
    let mut seen = std::collections::BTreeSet::new();
    for (id, p) in ids.iter().zip(paths) {
        if !seen.insert(*id) {
            bail!("duplicate frame id {id} (from {})", p.display());
        }
    }
    Ok(ids)
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let mut m = RunManifest::new("simulate");
    m.seed = a.seed;
    m.inputs.push(a.scene.clone());
    m.config_paths.extend(a.config.clone());
    let t = Instant::now();
    let cfg = stage("config", load_radar(a.config.as_ref()))?;
    let mut scenes = stage("scene", load_scenes(&a.scene))?;
    if scenes.is_empty() {
        return stage("scene", Err(anyhow!("{}: no scenes", a.scene.display())));
    }
    for (i, s) in scenes.iter_mut().enumerate() {
        if let Some(seed) = a.seed {
            s.seed = seed.wrapping_add(i as u64);
        }
        for b in &s.boxes {
            stage("scene", b.validate().with_context(|| format!("frame {}", s.frame_id)))?;
        }
    }
    let mut ids: Vec<u64> = scenes.iter().map(|s| s.frame_id).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != scenes.len() {
        return stage("scene", Err(anyhow!("duplicate frame_id in {}", a.scene.display())));
    }
    m.time("load", t);
    let snr = if a.no_noise { None } else { Some(a.snr_db.unwrap_or(-cfg.noise_floor_db)) };
    stage("output", create_dir(&a.out))?;

    let t = Instant::now();
    let cubes: Vec<PathBuf> = stage(
        "simulate",
        scenes
            .par_iter()
            .map(|s| {
                let cube = simulate_scene(s, &cfg, snr).with_context(|| format!("frame {}", s.frame_id))?;
                let path = a.out.join(format!("frame_{:06}.rtd", s.frame_id));
                io::write_tensor(&path, &io::Tensor::from_cube(&cube))?;
                info!("wrote {}", path.display());
                Ok(path)
            })
            .collect::<anyhow::Result<Vec<_>>>(),
    )?;
    m.time("simulate", t);
    for c in cubes {
        m.output("cubes", c);
    }
    let gts: Vec<BoxSet> = scenes.iter().map(|s| BoxSet::new(s.frame_id, s.boxes.clone())).collect();
    let gt_path = a.out.join("ground_truth.jsonl");
    stage("output", io::write_jsonl(&gt_path, &gts))?;
    m.output("ground_truth", gt_path);
    let radar_path = a.out.join("radar.json");
    stage("output", io::write_json(&radar_path, &cfg))?;
    m.output("config", radar_path);
    stage("output", m.write(&a.out.join("manifest.json")))
}

fn process(a: ProcessArgs) -> anyhow::Result<()> {
    let mut m = RunManifest::new("process");
    m.inputs.extend(a.cubes.iter().cloned());
    m.config_paths.extend(a.config.clone());
    let cfg = stage("config", load_radar(a.config.as_ref()))?;
    let registry = FormatRegistry::default();
    let formats: Vec<String> = if a.formats.is_empty() {
        registry.names().iter().map(|s| s.to_string()).collect()
    } else {
        a.formats.clone()
    };
    for f in &formats {
        stage("args", registry.get(f).map(|_| ()))?;
    }
    if !(a.extent > 0.0 && a.meters_per_pixel > 0.0) {
        return stage("args", Err(anyhow!("--extent and --meters-per-pixel must be positive")));
    }
    let params = ProcessParams {
        bev: BevParams {
            meters_per_pixel: a.meters_per_pixel,
            extent_forward: a.extent,
            extent_left: a.extent,
            extent_right: a.extent,
        },
        ..Default::default()
    };
    stage("output", create_dir(&a.out))?;
    let t = Instant::now();
    let written: Vec<Vec<PathBuf>> = stage(
        "process",
        a.cubes
            .par_iter()
            .map(|path| {
                let cube = io::read_tensor(path)
                    .and_then(|t| t.to_cube(&cfg))
                    .with_context(|| format!("loading {}", path.display()))?;
                let frame = FrameData::new(&cube, &params);
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cube");
                let mut out = Vec::new();
                for name in &formats {
                    let output = registry.get(name)?.process(&frame)?;
                    let tensor = a.out.join(format!("{stem}.{name}.rtd"));
                    let pgm = a.out.join(format!("{stem}.{name}.pgm"));
                    match &output {
                        FormatOutput::Polar(map) => {
                            io::write_polar(&tensor, map)?;
                            io::write_pgm(&pgm, io::polar_render_view(map).view(), a.gamma)?;
                        }
                        FormatOutput::Bev(bev) => {
                            io::write_bev(&tensor, bev)?;
                            io::write_pgm(&pgm, bev.values.view(), a.gamma)?;
                        }
                    }
                    info!("wrote {}", tensor.display());
                    out.push(tensor);
                    out.push(pgm);
                }
                Ok(out)
            })
            .collect::<anyhow::Result<Vec<_>>>(),
    )?;
    m.time("process", t);
    for p in written.into_iter().flatten() {
        m.output("process", p);
    }
    stage("output", m.write(&a.out.join("manifest.json")))
}

fn detect(a: DetectArgs) -> anyhow::Result<()> {
    let mut m = RunManifest::new("detect");
    m.inputs.extend(a.inputs.iter().cloned());
    let ids = stage("args", frame_ids(&a.inputs))?;
    let params = BaselineParams {
        cfar: CfarParams {
            pfa: a.cfar.pfa,
            train_cells: a.cfar.train_cells,
            guard_cells: a.cfar.guard_cells,
            ..Default::default()
        },
        ..Default::default()
    };
    let t = Instant::now();
    let sets: Vec<BoxSet> = stage(
        "detect",
        a.inputs
            .par_iter()
            .zip(&ids)
            .map(|(path, &id)| {
                let bev = io::read_bev(path, None).with_context(|| format!("loading {}", path.display()))?;
                let raw = radar_obb::dsp::baseline_detect_boxes(&bev, &params)?;
                Ok(postprocess(&raw, a.confidence, a.nms_iou, id))
            })
            .collect::<anyhow::Result<Vec<_>>>(),
    )?;
    m.time("detect", t);
    let mut sets = sets;
    sets.sort_by_key(|s| s.frame_id);
    stage("output", io::write_jsonl(&a.out, &sets))?;
    m.output("detections", a.out.clone());
    stage("output", m.write(&manifest_path_for_file(&a.out)))
}

fn autolabel(a: AutolabelArgs) -> anyhow::Result<()> {
    let mut m = RunManifest::new("autolabel");
    m.seed = Some(a.seed);
    m.inputs.extend(a.bevs.iter().cloned());
    m.inputs.extend(a.dets.iter().cloned());
    m.inputs.extend(a.synthesize_from.clone());
    if a.dets.is_empty() && a.synthesize_from.is_none() {
        return stage("args", Err(anyhow!("give --dets files or --synthesize-from")));
    }
    let ids = stage("args", frame_ids(&a.bevs))?;
    let det_files: Vec<BTreeMap<u64, BoxSet>> = stage(
        "load",
        a.dets
            .iter()
            .map(|p| Ok(io::read_jsonl(p)?.into_iter().map(|s| (s.frame_id, s)).collect()))
            .collect::<anyhow::Result<Vec<_>>>(),
    )?;
    let truth: BTreeMap<u64, BoxSet> = match &a.synthesize_from {
        Some(p) => stage("load", io::read_jsonl(p))?.into_iter().map(|s| (s.frame_id, s)).collect(),
        None => BTreeMap::new(),
    };
    let params = AutolabelParams {
        fusion_threshold: a.fusion_threshold,
        score_floor: a.score_floor,
        enlarge: a.enlarge,
        min_concentration: a.min_concentration,
        ..Default::default()
    };
    let detectors = [NoisyDetector::default(); 2];
    let t = Instant::now();
    let labels: Vec<BoxSet> = stage(
        "autolabel",
        a.bevs
            .par_iter()
            .zip(&ids)
            .map(|(path, &id)| {
                let bev = io::read_bev(path, None).with_context(|| format!("loading {}", path.display()))?;
                let mut sets: Vec<BoxSet> = det_files
                    .iter()
                    .map(|f| f.get(&id).cloned().unwrap_or_else(|| BoxSet::new(id, Vec::new())))
                    .collect();
                if a.synthesize_from.is_some() {
                    let gt = truth.get(&id).cloned().unwrap_or_else(|| BoxSet::new(id, Vec::new()));
                    sets.extend(tta_detection_sets(&gt, &detectors, a.seed ^ id));
                }
                Ok(autolabel_frame(&sets, &bev, &params)?)
            })
            .collect::<anyhow::Result<Vec<_>>>(),
    )?;
    m.time("autolabel", t);
    let mut labels = labels;
    labels.sort_by_key(|s| s.frame_id);
    stage("output", io::write_jsonl(&a.out, &labels))?;
    m.output("labels", a.out.clone());
    stage("output", m.write(&manifest_path_for_file(&a.out)))
}

#[derive(Serialize)]
struct FitSummary {
    steps: usize,
    lr: f64,
    initial_loss: f64,
    final_loss: f64,
    /// Mean predicted σ per parameter over positive anchors.
    mean_sigma: [f64; 6],
}

fn fit_demo(a: FitDemoArgs) -> anyhow::Result<()> {
    let mut m = RunManifest::new("fit-demo");
    m.config_paths.extend(a.config.clone());
    let mut cfg: ToyConfig = match &a.config {
        Some(p) => stage("config", load_json(p))?,
        None => ToyConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    m.seed = Some(cfg.seed);
    let t = Instant::now();
    let data = stage("dataset", make_toy_dataset(&cfg))?;
    m.time("dataset", t);
    let t = Instant::now();
    let fit = stage("fit", fit_toy_head(&data, a.steps, a.lr))?;
    m.time("fit", t);
    let mean_sigma = stage("fit", fit.mean_sigma(&data))?;

    stage("output", create_dir(&a.out))?;
    let mut csv = String::from("step,total,obj,loc\n");
    for p in &fit.trace {
        csv.push_str(&format!("{},{},{},{}\n", p.step, p.total, p.obj, p.loc));
    }
    let trace_path = a.out.join("loss_trace.csv");
    stage("output", io::write_text(&trace_path, &csv))?;
    m.output("trace", trace_path);
    let summary = FitSummary {
        steps: a.steps,
        lr: a.lr,
        initial_loss: fit.trace[0].total,
        final_loss: fit.trace.last().map_or(f64::NAN, |p| p.total),
        mean_sigma,
    };
    let summary_path = a.out.join("summary.json");
    stage("output", io::write_json(&summary_path, &summary))?;
    m.output("summary", summary_path);
    stage("output", m.write(&a.out.join("manifest.json")))
}

fn check_thresholds(t: &[f64]) -> anyhow::Result<()> {
    if t.is_empty() || t.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
        bail!("IoU thresholds must lie in (0, 1], got {t:?}");
    }
    Ok(())
}

fn threshold_tag(t: f64) -> String {
    format!("{t}").replace('.', "p")
}

/// AP table (JSON + text) and one PR CSV per row and threshold.
fn write_report(dir: &Path, table: &ApTable, curves: &[(String, PrCurve)], m: &mut RunManifest) -> anyhow::Result<()> {
    create_dir(dir)?;
    let json = dir.join("ap_table.json");
    io::write_json(&json, table)?;
    let text = dir.join("ap_table.txt");
    io::write_text(&text, &table.to_text())?;
    m.output("ap_table", json);
    m.output("ap_table", text);
    for (name, c) in curves {
        let p = dir.join(format!("pr_{name}_iou{}.csv", threshold_tag(c.iou_threshold)));
        io::write_text(&p, &c.to_csv())?;
        m.output("pr_curves", p);
    }
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let mut m = RunManifest::new("eval");
    m.inputs.push(a.dets.clone());
    m.inputs.push(a.gt.clone());
    stage("args", check_thresholds(&a.iou))?;
    let dets = stage("load", io::read_jsonl(&a.dets))?;
    let gts = stage("load", io::read_jsonl(&a.gt))?;
    let name = a
        .name
        .clone()
        .or_else(|| a.dets.file_stem().and_then(|s| s.to_str()).map(str::to_string))
        .unwrap_or_else(|| "detections".into());
    let t = Instant::now();
    let mut curves = Vec::new();
    let mut ap = Vec::new();
    for &thr in &a.iou {
        let c = stage("eval", average_precision(&dets, &gts, thr))?;
        ap.push(c.ap);
        curves.push((name.clone(), c));
    }
    m.time("eval", t);
    let table = ApTable {
        iou_thresholds: a.iou.clone(),
        rows: vec![ApRow { format: name, ap }],
    };
    stage("output", write_report(&a.out, &table, &curves, &mut m))?;
    print!("{}", table.to_text());
    stage("output", m.write(&a.out.join("manifest.json")))
}

/// Benchmark settings readable from `demo --config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoFile {
    pub frames: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub scenes: SceneParams,
    pub radar: RadarConfig,
    pub iou_thresholds: Vec<f64>,
    pub autolabel_format: Option<String>,
    pub autolabel: AutolabelParams,
    pub noisy_detectors: [NoisyDetector; 2],
}

impl Default for DemoFile {
    fn default() -> Self {
        let d = DemoConfig::default();
        DemoFile {
            frames: d.frames,
            seed: d.seed,
            snr_db: d.snr_db,
            scenes: d.scenes,
            radar: d.radar,
            iou_thresholds: DEFAULT_IOU_THRESHOLDS.to_vec(),
            autolabel_format: d.autolabel_format,
            autolabel: d.autolabel,
            noisy_detectors: d.noisy_detectors,
        }
    }
}

fn demo(a: DemoArgs) -> anyhow::Result<()> {
    let mut m = RunManifest::new("demo");
    m.config_paths.extend(a.config.clone());
    let mut file: DemoFile = match &a.config {
        Some(p) => stage("config", load_json(p))?,
        None => DemoFile::default(),
    };
    file.seed = a.seed.unwrap_or(file.seed);
    file.frames = a.frames.unwrap_or(file.frames);
    file.snr_db = a.snr_db.unwrap_or(file.snr_db);
    stage("config", file.radar.validate())?;
    stage("config", check_thresholds(&file.iou_thresholds))?;
    m.seed = Some(file.seed);
    let cfg = DemoConfig {
        frames: file.frames,
        seed: file.seed,
        snr_db: file.snr_db,
        scenes: file.scenes,
        radar: file.radar.clone(),
        iou_thresholds: file.iou_thresholds.clone(),
        autolabel_format: file.autolabel_format.clone(),
        autolabel: file.autolabel,
        noisy_detectors: file.noisy_detectors,
        ..Default::default()
    };
    info!("demo: {} frames, seed {}", cfg.frames, cfg.seed);
    let report = run_demo(&cfg).map_err(|(s, e)| anyhow::Error::new(StageError { stage: s, source: e.into() }))?;
    m.timings_ms = report.timings_ms.clone();

    stage("output", create_dir(&a.out))?;
    stage("output", write_report(&a.out, &report.table, &report.curves, &mut m))?;
    let gts: Vec<BoxSet> = report.frames.iter().map(|f| f.ground_truth.clone()).collect();
    let gt_path = a.out.join("ground_truth.jsonl");
    stage("output", io::write_jsonl(&gt_path, &gts))?;
    m.output("ground_truth", gt_path);
    let det_dir = a.out.join("detections");
    stage("output", create_dir(&det_dir))?;
    for name in report.frames.first().map(|f| f.detections.keys().cloned().collect::<Vec<_>>()).unwrap_or_default() {
        let sets: Vec<BoxSet> = report.frames.iter().filter_map(|f| f.detections.get(&name).cloned()).collect();
        let p = det_dir.join(format!("{name}.jsonl"));
        stage("output", io::write_jsonl(&p, &sets))?;
        m.output("detections", p);
    }
    if let Some(summary) = &report.autolabel {
        let labels: Vec<BoxSet> = report.frames.iter().filter_map(|f| f.autolabel.clone()).collect();
        let p = a.out.join("autolabels.jsonl");
        stage("output", io::write_jsonl(&p, &labels))?;
        m.output("autolabel", p);
        let s = a.out.join("autolabel_summary.json");
        stage("output", io::write_json(&s, summary))?;
        m.output("autolabel", s);
    }
    let used = a.out.join("config.json");
    stage("output", io::write_json(&used, &file))?;
    m.output("config", used);
    print!("{}", report.table.to_text());
    stage("output", m.write(&a.out.join("manifest.json")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_ids_from_names() {
        assert_eq!(frame_id_from_path(Path::new("out/frame_000012.img-music.rtd")), Some(12));
        assert_eq!(frame_id_from_path(Path::new("frame_x.rtd")), None);
        assert_eq!(frame_id_from_path(Path::new("cube.rtd")), None);
        let ids = frame_ids(&[PathBuf::from("a.rtd"), PathBuf::from("frame_7.rtd")]).unwrap();
        assert_eq!(ids, vec![0, 7]);
        assert!(frame_ids(&[PathBuf::from("frame_1.rtd"), PathBuf::from("b.rtd")]).is_err());
    }

    #[test]
    fn json_errors_carry_field_path() {
        let err = parse_json::<RadarConfig>(Path::new("r.json"), "{\n  \"num_antennas\": \"x\"\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("r.json:2:"), "{msg}");
        assert!(msg.contains("num_antennas"), "{msg}");
    }

    #[test]
    fn error_json_shape() {
        let e = anyhow::Error::new(StageError { stage: "eval".into(), source: anyhow!("boom") });
        let v: serde_json::Value = serde_json::from_str(&error_json("eval", &e)).unwrap();
        assert_eq!(v["stage"], "eval");
        assert_eq!(v["error"], "boom");
    }
}
