use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use earsift_core::enroll::{build_template, prepare, PreparedImage, WHOLE_CROP_REGION};
use earsift_core::evaluation::calibrate::{calibrate, check_disjoint};
use earsift_core::evaluation::protocol::prepare_dataset;
use earsift_core::evaluation::synth::{generate_synthetic_subjects, Dataset};
use earsift_core::evaluation::{evaluate_prepared, resolve_global};
use earsift_core::imaging::{load_image, load_mask, save_pgm};
use earsift_core::matching::{decide, match_templates};
use earsift_core::segmentation::{gate_regions, RegionSummary};
use earsift_core::template_file::TemplateFile;
use earsift_core::{Config, Error, GateMode, Mask, MixtureModel, Result, SegmentationMode, Template};
use log::{info, warn};
use serde_json::json;

use crate::{Command, GlobalArgs};

pub const GLOBAL_MODEL_FILE: &str = "global_model.json";

fn load_config(args: &GlobalArgs) -> Result<Config> {
    let mut cfg = match &args.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if let Some(strategy) = args.strategy {
        cfg.matching.strategy = strategy;
    }
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("--set expects KEY=VALUE, got '{o}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_optional_mask(path: Option<&Path>) -> Result<Option<Mask>> {
    path.map(load_mask).transpose()
}

fn prepare_path(image: &Path, mask: Option<&Path>, cfg: &Config) -> Result<PreparedImage> {
    let img = load_image(image)?;
    prepare(&img, load_optional_mask(mask)?.as_ref(), cfg)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The gating model for global gate mode, required there and ignored otherwise.
fn global_model(cfg: &Config, path: Option<&Path>) -> Result<Option<MixtureModel>> {
    match (cfg.gate_mode, path) {
        (GateMode::Global, Some(p)) => {
            let m: MixtureModel = read_json(p)?;
            m.validate()?;
            Ok(Some(m))
        }
        (GateMode::Global, None) => Err(Error::InvalidParameter("gate_mode = global needs --global-model".into())),
        (GateMode::Reference, Some(_)) => {
            warn!("--global-model is ignored in reference gate mode");
            Ok(None)
        }
        (GateMode::Reference, None) => Ok(None),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "subject".into())
}

fn whole_crop_summary(prep: &PreparedImage) -> RegionSummary {
    RegionSummary {
        component_index: WHOLE_CROP_REGION,
        pixel_count: prep.pixels.len(),
        fraction: 1.0,
        kept: true,
        kl_to_reference: None,
    }
}

pub fn run(args: &GlobalArgs, command: Command) -> Result<ExitCode> {
    let cfg = load_config(args)?;
    match command {
        Command::Enroll {
            image,
            out,
            mask,
            subject,
            global_model: gm,
        } => {
            let global = global_model(&cfg, gm.as_deref())?;
            let prep = prepare_path(&image, mask.as_deref(), &cfg)?;
            let subject = subject.unwrap_or_else(|| stem(&image));
            let e = build_template(&prep, &subject, global.as_ref(), &cfg)?;
            let regions = match &e.segmentation {
                Some(seg) => seg.summaries().into_iter().filter(|r| r.kept).collect(),
                None => vec![whole_crop_summary(&prep)],
            };
            TemplateFile::from_template(&e.template, &cfg.fingerprint(), regions).write(&out)?;
            println!(
                "enrolled {subject}: {} regions, {} keypoints -> {}",
                e.template.k_count,
                e.template.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            probe,
            template,
            mask,
            global_model: gm,
        } => {
            let file = TemplateFile::read(&template)?;
            if file.config_fingerprint != cfg.fingerprint() {
                warn!("template was enrolled with a different config");
            }
            let reference = file.to_template()?;
            let global = global_model(&cfg, gm.as_deref())?;
            let gate = global.as_ref().unwrap_or(&reference.source_model);
            let prep = prepare_path(&probe, mask.as_deref(), &cfg)?;
            let e = build_template(&prep, &stem(&probe), Some(gate), &cfg)?;
            let result = match_templates(&e.template, &reference, &cfg.matching)?;
            let d = decide(&result, cfg.matching.psi);
            let out = json!({
                "subject_id": reference.subject_id,
                "accept": d.accept,
                "psi": d.psi,
                "score_used": d.score_used,
                "normalized_score": result.normalized_score,
                "match_count": result.match_count,
                "d_final": result.d_final,
                "strategy": cfg.matching.strategy,
                "mode": cfg.mode,
                "probe_keypoints": e.template.len(),
                "template_keypoints": reference.len(),
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("JSON value serializes"));
            Ok(if d.accept { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Segment {
            image,
            out,
            mask,
            reference,
        } => {
            let img = load_image(&image)?;
            let prep = prepare(&img, load_optional_mask(mask.as_deref())?.as_ref(), &cfg)?;
            let reference_model = match &reference {
                Some(p) => Some(TemplateFile::read(p)?.to_template()?.source_model),
                None => None,
            };
            let seg = gate_regions(
                &prep.segmentation,
                reference_model.as_ref().unwrap_or(&prep.model),
                cfg.tau_kl,
                cfg.w_min,
            )?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let (w, h) = seg.dims();
            save_pgm(w, h, &seg.label_map(), out.join("labels.pgm"))?;
            let kept = seg.kept_mask();
            let kept_bytes: Vec<u8> = kept.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
            save_pgm(w, h, &kept_bytes, out.join("kept.pgm"))?;
            let summary = json!({
                "image": image,
                "k_effective": seg.k_effective,
                "tau_kl": cfg.tau_kl,
                "w_min": cfg.w_min,
                "regions": seg.summaries(),
                "model": seg.model,
            });
            write_json(&out.join("segmentation.json"), &summary)?;
            println!(
                "{} components, {} kept -> {}",
                seg.regions.len(),
                seg.kept_regions().count(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Extract { image, out, mask, debug } => {
            let prep = prepare_path(&image, mask.as_deref(), &cfg)?;
            let prior = Config {
                mode: SegmentationMode::Prior,
                ..cfg.clone()
            };
            let e = build_template(&prep, &stem(&image), None, &prior)?;
            TemplateFile::from_template(&e.template, &cfg.fingerprint(), vec![whole_crop_summary(&prep)]).write(&out)?;
            if let Some(path) = debug {
                write_json(&path, &keypoint_dump(&e.template))?;
            }
            println!("{} keypoints -> {}", e.template.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            manifest,
            out,
            global_model: gm,
        } => {
            let ds = Dataset::load(&manifest)?;
            let given = global_model(&cfg, gm.as_deref())?;
            let prepared = prepare_dataset(&ds, &cfg)?;
            for (id, reason) in &prepared.excluded {
                warn!("excluded {id}: {reason}");
            }
            let global = resolve_global(&prepared, &cfg, given.as_ref())?;
            let eval = evaluate_prepared(&prepared, &cfg, global.as_ref())?;
            eval.write_outputs(&out)?;
            if let Some(g) = &global {
                let path = out.join(GLOBAL_MODEL_FILE);
                write_json(&path, &serde_json::to_value(g).expect("model serializes"))?;
            }
            print!("{}", eval.report.summary());
            info!("outputs written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate {
            manifest,
            against,
            out,
            global_model: gm,
        } => {
            let ds = Dataset::load(&manifest)?;
            if let Some(eval_manifest) = against {
                check_disjoint(&ds, &Dataset::load(&eval_manifest)?)?;
            }
            let given = global_model(&cfg, gm.as_deref())?;
            let prepared = prepare_dataset(&ds, &cfg)?;
            let cal = calibrate(&prepared, &cfg, given.as_ref())?;
            let value = serde_json::to_value(&cal).expect("calibration serializes");
            println!("{}", serde_json::to_string_pretty(&value).expect("JSON value serializes"));
            if let Some(path) = out {
                write_json(&path, &value)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::GenSynth {
            out,
            subjects,
            probes,
            first_subject,
        } => {
            let ds = generate_synthetic_subjects(first_subject..first_subject + subjects, probes, &out, cfg.seed)?;
            println!(
                "{} subjects, {} probes -> {}",
                ds.subjects.len(),
                ds.probe_count(),
                manifest_path(&out).display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(earsift_core::evaluation::synth::MANIFEST_NAME)
}

fn keypoint_dump(t: &Template) -> serde_json::Value {
    let points: Vec<_> = t
        .keypoints
        .iter()
        .map(|k| json!({ "x": k.x, "y": k.y, "scale": k.scale, "orientation": k.orientation }))
        .collect();
    json!({ "subject_id": t.subject_id, "count": t.len(), "keypoints": points })
}
