use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::manifest::RunManifest;
use super::settings::{parse_config, render_config, KeyValues, RunSettings};
use super::*;
use crate::data::{
    concat_modalities, extract_patch, labeled_mask, load_labels, load_modalities, modality_name,
    raster_paths, split, synth_scene, write_label_raster, write_scene, BandStack, BandStats,
    LabelRaster, PatchDataset, SceneSpec,
};
use crate::error::{Error, Result};
use crate::layers::init_params;
use crate::layers::ModelConfig;
use crate::metrics::{render_report, render_table, Summary};
use crate::training::{
    evaluate, grad_check, load_checkpoint, predict as predict_pixel, save_checkpoint, toy_config,
    train_observed, TrainRun,
};

/// Map colors: entry 0 is reserved for "no class", entry `i` colors class `i`.
pub const PALETTE: [[u8; 3]; 16] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [128, 0, 0],
    [128, 128, 128],
];

/// Display names `class 1 … class K`.
pub fn class_names(classes: usize) -> Vec<String> {
    (1..=classes).map(|i| format!("class {i}")).collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_config(path: &Path) -> Result<KeyValues> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

impl TrainFlags {
    fn overrides(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.insert(k.to_string(), v);
            }
        };
        put("variant", self.variant.map(|v| v.to_string()));
        put("sgu_placement", self.sgu_placement.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("optimizer", self.optimizer.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("train_fraction", self.train_fraction.map(|v| v.to_string()));
        put("labels", self.labels.clone());
        put("train_labels", self.train_labels.clone());
        put("test_labels", self.test_labels.clone());
        put("patch_window", self.patch_window.map(|v| v.to_string()));
        put("token_segment", self.token_segment.map(|v| v.to_string()));
        put("hidden_dim", self.hidden_dim.map(|v| v.to_string()));
        put("ffn_dim", self.ffn_dim.map(|v| v.to_string()));
        put("blocks", self.blocks.map(|v| v.to_string()));
        put(
            "dwc_kernels",
            self.dwc_kernels.as_ref().map(|k| {
                k.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            }),
        );
        kv
    }

    /// Defaults, then the config file, then the flags.
    pub fn resolve(&self) -> Result<RunSettings> {
        let mut kv = match &self.config {
            Some(p) => read_config(p)?,
            None => KeyValues::new(),
        };
        kv.extend(self.overrides());
        RunSettings::from_key_values(&kv)
    }
}

/// Co-registered bands plus training and test pixels.
struct SceneData {
    stack: BandStack,
    inputs: Vec<PathBuf>,
    train: (LabelRaster, Vec<bool>),
    test: (LabelRaster, Vec<bool>),
}

fn load_scene(dir: &Path, s: &RunSettings) -> Result<SceneData> {
    let stacks = load_modalities(dir)?;
    let mut inputs: Vec<PathBuf> = (0..stacks.len())
        .flat_map(|i| {
            let (h, d) = raster_paths(dir, &modality_name(i));
            [h, d]
        })
        .collect();
    let stack = concat_modalities(&stacks)?;
    let (train, test) = match (&s.train_labels, &s.test_labels) {
        (Some(tr), Some(te)) => {
            let train = load_labels(dir, tr)?;
            let test = load_labels(dir, te)?;
            for name in [tr, te] {
                let (h, d) = raster_paths(dir, name);
                inputs.extend([h, d]);
            }
            let (trm, tem) = (labeled_mask(&train), labeled_mask(&test));
            ((train, trm), (test, tem))
        }
        _ => {
            let labels = load_labels(dir, &s.labels)?;
            let (h, d) = raster_paths(dir, &s.labels);
            inputs.extend([h, d]);
            let (trm, tem) = split(&labels, s.train_fraction, s.seed)?;
            ((labels.clone(), trm), (labels, tem))
        }
    };
    Ok(SceneData {
        stack,
        inputs,
        train,
        test,
    })
}

fn dataset(
    scene: &SceneData,
    part: SplitChoice,
    config: &ModelConfig,
    stats: &BandStats,
) -> Result<PatchDataset> {
    let (labels, mask) = match part {
        SplitChoice::Train => &scene.train,
        SplitChoice::Test => &scene.test,
    };
    labels.check_against(&scene.stack, config.num_classes)?;
    PatchDataset::build(&scene.stack, labels, mask, config.patch_window, stats)
}

struct Fitted {
    config: ModelConfig,
    run: TrainRun,
    test: PatchDataset,
}

/// Fills the data-derived fields of `s`, then trains.
fn fit(scene: &SceneData, s: &mut RunSettings, label: &str) -> Result<Fitted> {
    let derived = scene.train.0.num_classes().max(scene.test.0.num_classes());
    let classes = s.classes.unwrap_or(derived);
    let stats = BandStats::from_pixels(&scene.stack, &scene.train.1)?;
    let config = s.model_config(scene.stack.bands(), classes)?;
    s.bands = Some(config.bands);
    s.classes = Some(classes);
    s.band_stats = Some(stats.clone());
    let train_ds = dataset(scene, SplitChoice::Train, &config, &stats)?;
    let test = dataset(scene, SplitChoice::Test, &config, &stats)?;
    eprintln!(
        "{label}: {} training and {} test samples, {} parameters",
        train_ds.len(),
        test.len(),
        crate::layers::param_count(&config)
    );
    let params = init_params(&config, s.seed)?;
    let epochs = s.epochs;
    let run = train_observed(
        params,
        &train_ds,
        &config,
        &s.train_settings(),
        s.seed,
        |e, l| eprintln!("{label}: epoch {}/{epochs} loss {l:.6}", e + 1),
    )?;
    Ok(Fitted { config, run, test })
}

pub fn synth(a: &SynthArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let spec = SceneSpec {
        classes: a.classes,
        height: a.height,
        width: a.width,
        modality_bands: a.bands.clone(),
        noise: a.noise,
        seed: a.seed,
    };
    let scene = synth_scene(&spec)?;
    let written = write_scene(&a.out, &scene.stacks, &scene.labels)?;
    let mut config = KeyValues::new();
    config.insert("classes".into(), a.classes.to_string());
    config.insert("height".into(), a.height.to_string());
    config.insert("width".into(), a.width.to_string());
    config.insert(
        "bands".into(),
        a.bands
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    config.insert("noise".into(), a.noise.to_string());
    let mut manifest = RunManifest::new("synth", config, a.seed);
    for p in &written {
        manifest.output(p)?;
    }
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(&a.out)?;
    println!("wrote {} files to {}", written.len(), a.out.display());
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let mut s = a.flags.resolve()?;
    let scene = load_scene(&a.data, &s)?;
    let label = s.variant.to_string();
    let fitted = fit(&scene, &mut s, &label)?;
    let cm = evaluate(&fitted.test, &fitted.run.params, &fitted.config)?;
    let report = render_report(&cm, &class_names(fitted.config.num_classes))?;

    create_dir(&a.out)?;
    let checkpoint = a.out.join(CHECKPOINT_NAME);
    save_checkpoint(&fitted.run.params, &checkpoint)?;
    let report_path = a.out.join(REPORT_NAME);
    write_text(&report_path, &report)?;
    let loss_path = a.out.join(LOSS_NAME);
    let mut csv = String::from("step,loss\n");
    for (i, l) in fitted.run.loss_curve.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", i + 1));
    }
    write_text(&loss_path, &csv)?;
    let config_path = a.out.join(CONFIG_NAME);
    write_text(&config_path, &render_config(&s.to_key_values()))?;

    let mut manifest = RunManifest::new("train", s.to_key_values(), s.seed);
    for p in &scene.inputs {
        manifest.input(p);
    }
    for p in [&checkpoint, &report_path, &loss_path, &config_path] {
        manifest.output(p)?;
    }
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(&a.out)?;
    print!("{report}");
    Ok(())
}

/// Settings and model of a finished run.
fn load_trained(
    checkpoint: &Path,
    config: Option<&PathBuf>,
) -> Result<(RunSettings, ModelConfig, crate::layers::ModelParams<f32>), Failure> {
    let config_path = match config {
        Some(p) => p.clone(),
        None => checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join(CONFIG_NAME),
    };
    let s = RunSettings::from_key_values(&read_config(&config_path)?)?;
    let model = s.trained_config()?;
    if !checkpoint.exists() {
        return Err(Failure::new(
            EXIT_ARTIFACT,
            format!("checkpoint {} not found", checkpoint.display()),
        ));
    }
    let params = load_checkpoint(checkpoint, &model)
        .map_err(|e| Failure::new(EXIT_ARTIFACT, e.to_string()))?;
    Ok((s, model, params))
}

fn check_bands(stack: &BandStack, config: &ModelConfig) -> Result<()> {
    if stack.bands() != config.bands {
        return Err(Error::Dimension(format!(
            "scene has {} bands but the checkpoint expects {}",
            stack.bands(),
            config.bands
        )));
    }
    Ok(())
}

fn recorded_stats(s: &RunSettings) -> Result<BandStats> {
    s.band_stats
        .clone()
        .ok_or_else(|| Error::Config("config lacks band_mean/band_std".into()))
}

pub fn eval(a: &EvalArgs) -> Result<(), Failure> {
    let (s, config, params) = load_trained(&a.checkpoint, a.config.as_ref())?;
    let scene = load_scene(&a.data, &s)?;
    check_bands(&scene.stack, &config)?;
    let ds = dataset(&scene, a.split, &config, &recorded_stats(&s)?)?;
    let cm = evaluate(&ds, &params, &config)?;
    let report = render_report(&cm, &class_names(config.num_classes))?;
    if let Some(p) = &a.report {
        write_text(p, &report)?;
    }
    print!("{report}");
    Ok(())
}

/// Binary PPM of a label raster colored through [`PALETTE`].
pub fn render_ppm(labels: &LabelRaster) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", labels.width(), labels.height()).into_bytes();
    for &l in labels.labels() {
        out.extend_from_slice(&PALETTE[l as usize % PALETTE.len()]);
    }
    out
}

pub fn predict(a: &PredictArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let (s, config, params) = load_trained(&a.checkpoint, a.config.as_ref())?;
    let stack = concat_modalities(&load_modalities(&a.data)?)?;
    check_bands(&stack, &config)?;
    let normed = recorded_stats(&s)?.apply(&stack)?;
    let (h, w) = (stack.height(), stack.width());
    let mut labels = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            let patch = extract_patch(&normed, row, col, config.patch_window)?;
            labels.push(predict_pixel(&patch, &params, &config)? as u16);
        }
    }
    let labels = LabelRaster::new(h, w, labels)?;
    create_dir(&a.out)?;
    let (hp, dp) = raster_paths(&a.out, PREDICTION_NAME);
    write_label_raster(&labels, &hp, &dp)?;
    let map = a.out.join(MAP_NAME);
    fs::write(&map, render_ppm(&labels)).map_err(|e| Error::io(&map, e))?;

    let mut manifest = RunManifest::new("predict", s.to_key_values(), s.seed);
    manifest.input(&a.checkpoint);
    for i in 0.. {
        let (mh, md) = raster_paths(&a.data, &modality_name(i));
        if !mh.exists() {
            break;
        }
        manifest.input(&mh);
        manifest.input(&md);
    }
    for p in [&hp, &dp, &map] {
        manifest.output(p)?;
    }
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(&a.out)?;
    println!("wrote {h}×{w} prediction to {}", a.out.display());
    Ok(())
}

pub fn ablate(a: &AblateArgs) -> Result<(), Failure> {
    let start = Instant::now();
    if a.seeds.is_empty() {
        return Err(Failure::new(EXIT_USAGE, "ablate needs at least one seed"));
    }
    let base = a.flags.resolve()?;
    create_dir(&a.out)?;
    let mut headers = Vec::new();
    let mut columns = Vec::new();
    let mut failure: Option<Failure> = None;
    let mut outputs = Vec::new();
    let mut inputs = Vec::new();
    for variant in Variant::ALL {
        let mut summaries = Vec::new();
        let mut failed = false;
        for &seed in &a.seeds {
            let mut s = RunSettings {
                variant,
                seed,
                ..base.clone()
            };
            let label = format!("{variant} seed {seed}");
            let result = load_scene(&a.data, &s).and_then(|scene| {
                inputs.clone_from(&scene.inputs);
                let f = fit(&scene, &mut s, &label)?;
                let cm = evaluate(&f.test, &f.run.params, &f.config)?;
                Summary::from_matrix(&cm, &class_names(f.config.num_classes))
            });
            match result {
                Ok(summary) => summaries.push(summary),
                Err(e) => {
                    eprintln!("{label} failed: {e}");
                    failure.get_or_insert_with(|| Failure::from(e));
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            continue;
        }
        let mean = Summary::mean(&summaries)?;
        let mut report = render_table(&[variant.column_header()], std::slice::from_ref(&mean))?;
        report.push('\n');
        report.push_str(&mean.to_key_values());
        let path = a.out.join(format!("{variant}.txt"));
        write_text(&path, &report)?;
        outputs.push(path);
        headers.push(variant.column_header());
        columns.push(mean);
    }
    if !columns.is_empty() {
        let table = render_table(&headers, &columns)?;
        let path = a.out.join(ABLATION_NAME);
        write_text(&path, &table)?;
        outputs.push(path);
        print!("{table}");
    }
    let mut config = base.to_key_values();
    config.insert(
        "seeds".into(),
        a.seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    let mut manifest = RunManifest::new("ablate", config, a.seeds[0]);
    for p in &inputs {
        manifest.input(p);
    }
    for p in &outputs {
        manifest.output(p)?;
    }
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(&a.out)?;
    failure.map_or(Ok(()), Err)
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<(), Failure> {
    let variants = match a.variant {
        Some(v) => vec![v],
        None => Variant::ALL.to_vec(),
    };
    let mut worst: Option<(Variant, String, f64)> = None;
    for v in variants {
        let report = grad_check(&toy_config(v), a.seed)?;
        print!("{}", report.render());
        if !report.passed() {
            let t = report.worst().expect("report has tensors");
            if worst.as_ref().is_none_or(|w| t.max_rel_err > w.2) {
                worst = Some((v, t.name.clone(), t.max_rel_err));
            }
        }
    }
    match worst {
        None => Ok(()),
        Some((v, name, err)) => Err(Failure::new(
            EXIT_VERIFICATION,
            format!("gradient check failed for {v}: tensor {name} has relative error {err:.3e}"),
        )),
    }
}
