use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use camodet::agp::{
    seeded_check, synthetic_task, train_toy, write_checkpoint, AdamWConfig, LossConfig,
    OptimizerChoice, RestrictionConfig, SyntheticSpec, TrainConfig, TrainSource, GRADCHECK_DIMS,
};
use camodet::dataset::{
    dataset_summary, mask_to_boxes, merge_boxes, read_annotations, reference_statistics,
    write_annotations, Category, DetectionDataset, MaskImage, Sample, Split,
};
use camodet::eval::{evaluate, read_detections, EvalParams};
use camodet::io::write_atomic;
use camodet::sfr::{generate_offline, write_offline, DirImageSource, ImageSource, SfrConfig};
use log::info;

use crate::{
    CliError, Command, ConvertMasksArgs, EvaluateArgs, GradcheckArgs, OptimizerArg, SfrArgs,
    SfrOfflineArgs, SummarizeArgs, TrainToyArgs,
};

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::ConvertMasks(a) => convert_masks(&a),
        Command::Summarize(a) => summarize(&a),
        Command::SfrOffline(a) => sfr_offline(&a),
        Command::TrainToy(a) => train(&a),
        Command::Evaluate(a) => evaluate_cmd(&a),
        Command::Gradcheck(a) => gradcheck(&a),
        Command::ConfigSchema => {
            println!("{}", serde_json::to_string_pretty(&crate::config_schema())?);
            Ok(())
        }
    }
}

const MASK_EXTENSIONS: [&str; 5] = ["png", "pgm", "pbm", "ppm", "pnm"];

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)
        .map_err(|e| CliError::new("io", format!("cannot list {}: {e}", dir.display())))?
    {
        let path = entry?.path();
        let keep = if want_dirs {
            path.is_dir()
        } else {
            path.is_file()
                && path
                    .extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| MASK_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        };
        if keep {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn convert_masks(a: &ConvertMasksArgs) -> Result<(), CliError> {
    let groups: Vec<(String, Vec<PathBuf>, String)> = match &a.category {
        Some(name) => vec![(
            name.clone(),
            sorted_entries(&a.masks, false)?,
            String::new(),
        )],
        None => sorted_entries(&a.masks, true)?
            .into_iter()
            .map(|d| {
                let name = file_name(&d);
                Ok((name.clone(), sorted_entries(&d, false)?, format!("{name}/")))
            })
            .collect::<Result<_, CliError>>()?,
    };
    if groups.iter().all(|(_, files, _)| files.is_empty()) {
        return Err(CliError::new(
            "no_masks",
            format!("no mask images found under {}", a.masks.display()),
        ));
    }
    let mut dataset = DetectionDataset::default();
    let mut review_images = 0usize;
    for (index, (name, files, prefix)) in groups.iter().enumerate() {
        let category_id = index as u32 + 1;
        dataset.categories.push(Category {
            id: category_id,
            name: name.clone(),
        });
        for path in files {
            let mask = MaskImage::load(path)?;
            let mut labels = mask_to_boxes(&mask, a.threshold);
            labels.iter_mut().for_each(|l| l.category_id = category_id);
            if let Some(gap) = a.merge_gap {
                labels = merge_boxes(&labels, gap);
            }
            if labels.iter().any(|l| l.review) {
                review_images += 1;
            }
            let mut image_name = file_name(path);
            if let Some(ext) = &a.image_ext {
                image_name = Path::new(&image_name)
                    .with_extension(ext.trim_start_matches('.'))
                    .to_string_lossy()
                    .into_owned();
            }
            dataset.samples.push(Sample {
                image_id: dataset.samples.len() as u64 + 1,
                image_path: format!("{prefix}{image_name}"),
                width: mask.width(),
                height: mask.height(),
                labels,
                split: a.split.into(),
            });
        }
    }
    write_annotations(&dataset, &a.out)?;
    let review_boxes: usize = dataset
        .samples
        .iter()
        .flat_map(|s| &s.labels)
        .filter(|l| l.review)
        .count();
    println!(
        "{} images, {} boxes, {} categories; {} boxes in {} images flagged for review",
        dataset.samples.len(),
        dataset.box_count(),
        dataset.categories.len(),
        review_boxes,
        review_images
    );
    Ok(())
}

fn summarize(a: &SummarizeArgs) -> Result<(), CliError> {
    let dataset = read_annotations(&a.annotations)?;
    let summary = dataset_summary(&dataset);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print!("{summary}");
        for reference in reference_statistics() {
            if reference.matches(&summary) {
                println!("counts match {}", reference.name);
            }
        }
    }
    Ok(())
}

fn sfr_config(a: &SfrArgs) -> SfrConfig {
    SfrConfig {
        grids: a.grids.clone(),
        pool_size: a.pool_size,
        crop_width: a.crop,
        crop_height: a.crop,
        canvas_size: a.canvas,
    }
}

fn sfr_offline(a: &SfrOfflineArgs) -> Result<(), CliError> {
    let dataset = read_annotations(&a.annotations)?;
    let images = DirImageSource::new(&a.images);
    let output = generate_offline(&dataset, &images, &sfr_config(&a.sfr), a.seed)?;
    write_offline(&output, &a.out)?;
    println!(
        "{} canvases from {} boxes written to {}",
        output.manifest.canvases.len(),
        output.manifest.usable_boxes,
        a.out.display()
    );
    Ok(())
}

fn train_config(a: &TrainToyArgs) -> TrainConfig {
    let restriction = match a.mode {
        crate::ModeArg::Boundary => RestrictionConfig::boundary(
            a.lambda_hn.unwrap_or(a.lambda),
            a.lambda_nb.unwrap_or(a.lambda),
        ),
        crate::ModeArg::Update => RestrictionConfig::update(a.lambda),
    };
    let optimizer = match a.optimizer {
        OptimizerArg::Adamw => OptimizerChoice::AdamW(AdamWConfig::from_momentum(
            a.lr,
            a.momentum_as.into(),
            a.momentum,
        )),
        OptimizerArg::Sgd => OptimizerChoice::Sgd { lr: a.lr },
    };
    TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        max_steps: a.max_steps,
        restriction,
        loss: LossConfig {
            focal_gamma: a.focal_gamma,
            focal_alpha: a.focal_alpha,
            temperature: a.temperature,
            w_bbox: a.w_bbox,
            w_contrastive: a.w_contrastive,
            w_cls: a.w_cls,
        },
        optimizer,
        hidden1: a.hidden1,
        hidden2: a.hidden2,
        embed: a.embed,
        seed: a.seed,
        sfr: a.sfr.then(|| sfr_config(&a.sfr_args)),
    }
}

fn train(a: &TrainToyArgs) -> Result<(), CliError> {
    let cfg = train_config(a);
    let outcome = match (&a.annotations, &a.images) {
        (Some(ann), Some(dir)) => {
            let dataset = read_annotations(ann)?;
            let images = DirImageSource::new(dir);
            train_toy(
                TrainSource {
                    dataset: &dataset,
                    images: &images as &dyn ImageSource,
                },
                &cfg,
            )?
        }
        _ => {
            let (dataset, images) = synthetic_task(&SyntheticSpec {
                samples: a.synthetic_samples,
                image_size: a.synthetic_size,
                seed: a.seed,
            });
            train_toy(
                TrainSource {
                    dataset: &dataset,
                    images: &images,
                },
                &cfg,
            )?
        }
    };
    fs::create_dir_all(&a.out)?;
    let mut log = String::new();
    for record in &outcome.log {
        log.push_str(&serde_json::to_string(record)?);
        log.push('\n');
    }
    write_atomic(&a.out.join("train_log.jsonl"), log.as_bytes())?;
    write_checkpoint(&outcome.params, &a.out.join("checkpoint.json"))?;
    info!("wrote {}", a.out.display());
    println!(
        "initial loss {:.6}, final loss {:.6} ({:.1}% of initial) after {} epochs",
        outcome.initial_loss,
        outcome.final_loss,
        100.0 * outcome.final_loss / outcome.initial_loss,
        outcome.log.len()
    );
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<(), CliError> {
    let mut dataset = read_annotations(&a.annotations)?;
    let mut detections = read_detections(&a.detections)?;
    if let Some(split) = a.split {
        let split: Split = split.into();
        dataset.samples.retain(|s| s.split == split);
        let kept: BTreeSet<u64> = dataset.samples.iter().map(|s| s.image_id).collect();
        detections.retain(|d| kept.contains(&d.image_id));
    }
    let report = evaluate(
        &detections,
        &dataset,
        EvalParams {
            max_detections: a.max_detections,
        },
    )?;
    if let Some(out) = &a.out {
        write_atomic(out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    print!("{report}");
    Ok(())
}

fn gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    let report = seeded_check(
        GRADCHECK_DIMS,
        a.models,
        a.regions,
        a.seed,
        a.step,
        &LossConfig::default(),
    );
    for b in &report.blocks {
        println!(
            "{:<24} max rel error {:.3e}  max abs error {:.3e}",
            b.name, b.max_rel_error, b.max_abs_error
        );
    }
    println!("max relative error: {:.3e}", report.max_rel_error);
    if report.max_rel_error > a.tolerance {
        return Err(CliError::new(
            "gradcheck_failed",
            format!(
                "max relative error {:.3e} exceeds tolerance {:.1e}",
                report.max_rel_error, a.tolerance
            ),
        ));
    }
    Ok(())
}
