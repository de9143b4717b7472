use std::path::{Path, PathBuf};
use std::time::Instant;

use fplab::features::FeatureSet;
use fplab::metrics::{
    ablation_csv, ablation_table, accuracy_table, auc, bench_table, choose_threshold, integrated_rates, pad_rates,
    AblationRow, AccuracyRow, BenchRow, IntegratedOperating, MetricReport, PadOperating, PadTrialSet, ScoreFile,
    ThresholdPolicy, TrialKind,
};
use fplab::recognizer::{choose_thresholds, design_trials, protocol_csv, CompareLivenessModel, DualGate, TrialContext};
use fplab::synthdata::{build_dataset, image_file_name, load_dataset, SynthDataset};
use fplab::train::{load_trained, run_recipe, Classifier, Recipe, RecipeKind, RecipeMode, TrainData};
use fplab::{write_atomic, Error, Image, ImageSample, Label, Result, Split};

use crate::config::{Config, Settings};

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(write_atomic(path, bytes.as_ref())?)
}

fn echo_config(dir: &Path, cfg: &Config) -> Result<()> {
    write(&dir.join("config.toml"), cfg.to_toml())
}

fn dataset(s: &Settings) -> Result<SynthDataset> {
    let manifest = s.data_dir.join("manifest.csv");
    if !manifest.exists() {
        return Err(Error::Data(format!(
            "{} not found; run gen-data first",
            manifest.display()
        )));
    }
    load_dataset(&manifest)
}

fn classifier(s: &Settings) -> Result<Classifier> {
    let c = load_trained(&s.model_dir)?;
    if c.input_size() != fplab::synthdata::IMAGE_SIZE {
        return Err(Error::Data(format!("model expects {}px inputs", c.input_size())));
    }
    Ok(c)
}

fn split_of(ds: &SynthDataset, split: Split) -> Result<Vec<ImageSample>> {
    let v = ds.split(split);
    if v.is_empty() {
        return Err(Error::Data(format!("the {split} split is empty")));
    }
    Ok(v)
}

pub fn gen_data(cfg: &Config, s: &Settings) -> Result<String> {
    let ds = build_dataset(&s.synth, Some(&s.data_dir))?;
    echo_config(&s.data_dir, cfg)?;
    Ok(format!(
        "wrote {} images ({} train, {} val) to {}",
        ds.samples.len(),
        ds.split(Split::Train).len(),
        ds.split(Split::Val).len(),
        s.data_dir.display()
    ))
}

pub fn train(cfg: &Config, s: &Settings) -> Result<String> {
    let ds = dataset(s)?;
    let data = TrainData {
        train: split_of(&ds, Split::Train)?,
        val: split_of(&ds, Split::Val)?,
    };
    let teacher = if s.recipe == RecipeKind::Distill {
        Some(load_trained(&s.teacher_dir)?)
    } else {
        None
    };
    let out = s.output.join("train").join(s.run_name());
    echo_config(&out, cfg)?;
    let recipe = Recipe {
        kind: s.recipe,
        mode: s.mode,
        config: s.train.clone(),
    };
    let art = run_recipe(&recipe, &data, Some(&out), teacher.as_ref())?;
    let row = AblationRow {
        recipe: s.recipe.name().into(),
        mode: s.mode.name().into(),
        val_auc: art.val_auc,
    };
    write(&out.join("summary.csv"), ablation_csv(&[row]))?;
    Ok(format!(
        "{}: val AUC {:.4}, outputs in {}",
        s.run_name(),
        art.val_auc,
        out.display()
    ))
}

fn pad_report(trials: &PadTrialSet, apcer_target: f64) -> Result<MetricReport> {
    let mut ops = Vec::new();
    for (name, policy) in [
        ("max-accuracy", ThresholdPolicy::MaxAccuracy),
        ("apcer-target", ThresholdPolicy::BpcerAtApcer(apcer_target)),
    ] {
        let threshold = choose_threshold(trials, policy)?;
        ops.push(PadOperating {
            policy: name.into(),
            threshold,
            rates: pad_rates(trials, threshold)?,
        });
    }
    let report = MetricReport::new(trials, auc(trials)?, ops);
    report.check()?;
    Ok(report)
}

pub fn eval(cfg: &Config, s: &Settings) -> Result<String> {
    let ds = dataset(s)?;
    let clf = classifier(s)?;
    let samples = split_of(&ds, s.eval_split)?;
    let images: Vec<&Image> = samples.iter().map(|x| &x.image).collect();
    let scores = clf.live_scores(&images, s.train.eval_batch)?;
    let trials = PadTrialSet::new(scores, samples.iter().map(|x| x.label).collect())?;
    let report = pad_report(&trials, s.apcer_target)?;
    let ids: Vec<String> = samples.iter().map(|x| image_file_name(&x.meta)).collect();
    let out = s.output.join("eval").join(s.run_name());
    echo_config(&out, cfg)?;
    ScoreFile::from_pad(&ids, &trials).write(&out.join("scores.csv"))?;
    write(&out.join("report.csv"), report.to_csv())?;
    write(&out.join("report.md"), report.to_markdown(&s.run_name()))?;
    Ok(format!(
        "{}: AUC {:.4} on {} images, report in {}",
        s.run_name(),
        report.auc,
        samples.len(),
        out.display()
    ))
}

/// Median and mean of per-extraction times in milliseconds.
pub fn timing_stats(ms: &[f64]) -> (f64, f64) {
    let mut v = ms.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    (median, v.iter().sum::<f64>() / n as f64)
}

pub fn extract(cfg: &Config, s: &Settings) -> Result<String> {
    let ds = dataset(s)?;
    let clf = classifier(s)?;
    let samples = split_of(&ds, s.eval_split)?;
    let samples = &samples[..s.extract_count.min(samples.len())];
    let images: Vec<&Image> = samples.iter().map(|x| &x.image).collect();
    let mut vectors = Vec::with_capacity(images.len());
    let mut live = Vec::with_capacity(images.len());
    for chunk in images.chunks(s.train.eval_batch) {
        for p in clf.predict(chunk)? {
            live.push(p.probs[0] as f32);
            vectors.push(p.embedding);
        }
    }
    let features = FeatureSet::new(clf.embedding_dim(), vectors)?;

    for i in 0..s.extract_warmup {
        clf.predict(&[images[i % images.len()]])?;
    }
    let mut ms = Vec::with_capacity(s.extract_runs);
    for i in 0..s.extract_runs {
        let img = images[i % images.len()];
        let t = Instant::now();
        clf.predict(&[img])?;
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let (median, mean) = timing_stats(&ms);

    let labels: Vec<Label> = samples.iter().map(|x| x.label).collect();
    let accuracy = if labels.contains(&Label::Live) && labels.contains(&Label::Spoof) {
        let set = PadTrialSet::new(live, labels)?;
        Some(pad_rates(&set, choose_threshold(&set, ThresholdPolicy::MaxAccuracy)?)?.accuracy)
    } else {
        None
    };
    let out = s.output.join("extract").join(s.run_name());
    echo_config(&out, cfg)?;
    features.write(&out.join("features.fplv"))?;
    let row = BenchRow {
        algorithm: s.run_name(),
        time_ms: mean,
        feat_size: features.dim,
        accuracy,
    };
    let acc = accuracy.map_or_else(String::new, |a| format!("{a:.12}"));
    write(
        &out.join("bench.csv"),
        format!(
            "algorithm,time_ms_mean,time_ms_median,timed_runs,feat_size,accuracy\n{},{mean:.6},{median:.6},{},{},{acc}\n",
            row.algorithm, s.extract_runs, row.feat_size
        ),
    )?;
    let md = format!(
        "{}\nMedian {median:.2} ms, mean {mean:.2} ms over {} warm single-image extractions.\n",
        bench_table(&[row]),
        s.extract_runs
    );
    write(&out.join("bench.md"), &md)?;
    Ok(format!(
        "{} features of size {} written to {}\n{md}",
        features.vectors.len(),
        features.dim,
        out.display()
    ))
}

pub fn match_trials(cfg: &Config, s: &Settings) -> Result<String> {
    let ds = dataset(s)?;
    let clf = classifier(s)?;
    let paths: Vec<String> = ds.samples.iter().map(|x| image_file_name(&x.meta)).collect();
    let pick = |split: Split| -> Result<(Vec<ImageSample>, Vec<String>)> {
        let (samples, p): (Vec<_>, Vec<_>) = ds
            .samples
            .iter()
            .zip(&paths)
            .filter(|(x, _)| x.meta.split == split)
            .map(|(x, p)| (x.clone(), p.clone()))
            .unzip();
        if samples.is_empty() {
            return Err(Error::Data(format!("the {split} split is empty")));
        }
        Ok((samples, p))
    };
    let (cal_samples, cal_paths) = pick(Split::Train)?;
    let (eval_samples, eval_paths) = pick(s.eval_split)?;

    // compare-liveness and thresholds are calibrated on the training split
    let cal_design = design_trials(&cal_samples, &cal_paths, s.max_trials, s.trial_seed)?;
    let cal = TrialContext {
        samples: &cal_samples,
        classifier: &clf,
        cfg: &s.recognizer,
    };
    let cal_templates = cal.enroll_all(&cal_design)?;
    let (feats, live) = cal.compare_training_set(&cal_design, &cal_templates)?;
    let model = CompareLivenessModel::fit(&feats, &live, s.compare_l2, s.compare_iters)?;
    let thresholds = choose_thresholds(&cal.run(&cal_design, &cal_templates, &model)?, &s.recognizer.weights)?;

    let design = design_trials(&eval_samples, &eval_paths, s.max_trials, s.trial_seed)?;
    let ctx = TrialContext {
        samples: &eval_samples,
        classifier: &clf,
        cfg: &s.recognizer,
    };
    let templates = ctx.enroll_all(&design)?;
    let trials = ctx.run(&design, &templates, &model)?;
    for kind in TrialKind::ALL {
        if !trials.iter().any(|t| t.kind == kind) {
            return Err(Error::Data(format!(
                "no {} trials in the {} split",
                kind.name(),
                s.eval_split
            )));
        }
    }
    let gate = DualGate {
        weights: s.recognizer.weights,
        thresholds,
    };
    let rates = integrated_rates(&trials, &gate)?;
    let fused: Vec<f32> = trials.iter().map(|t| gate.fused(t)).collect();

    // PAD view: normal liveness of genuine versus attack queries
    let pad_trials: Vec<_> = trials.iter().filter(|t| t.kind != TrialKind::Impostor).collect();
    let pad = PadTrialSet::new(
        pad_trials.iter().map(|t| t.normal_liveness).collect(),
        pad_trials
            .iter()
            .map(|t| {
                if t.kind == TrialKind::Genuine {
                    Label::Live
                } else {
                    Label::Spoof
                }
            })
            .collect(),
    )?;
    let mut report = pad_report(&pad, s.apcer_target)?;
    report.integrated = Some(IntegratedOperating {
        match_threshold: thresholds.matching,
        im_threshold: thresholds.im,
        rates,
    });
    report.check()?;

    let out = s.output.join("match").join(s.run_name());
    echo_config(&out, cfg)?;
    let rows: Vec<_> = design.trials.iter().map(|(r, _)| r.clone()).collect();
    write(&out.join("protocol.csv"), protocol_csv(&rows)?)?;
    ScoreFile::from_comparisons(&trials, &fused).write(&out.join("scores.csv"))?;
    let mut decisions = String::from("trial_id,type,decision\n");
    for t in &trials {
        let d = if fplab::metrics::AcceptRule::accept(&gate, t) {
            "accept"
        } else {
            "reject"
        };
        decisions.push_str(&format!("{},{},{d}\n", t.trial_id, t.kind.name()));
    }
    write(&out.join("decisions.csv"), decisions)?;
    write(&out.join("compare_model.json"), model.to_json()?)?;
    write(&out.join("report.csv"), report.to_csv())?;
    let md = report.to_markdown(&s.run_name());
    write(&out.join("report.md"), &md)?;
    Ok(format!(
        "{} trials scored, outputs in {}\n{md}",
        trials.len(),
        out.display()
    ))
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    v.sort();
    Ok(v)
}

fn read_csv(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records().map(|x| x.map_err(Error::from)).collect()
}

fn parse_f64(field: &str, path: &Path) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Data(format!("{}: {field:?} is not a number", path.display())))
}

/// Ablation, benchmark and accuracy tables over every run under the output
/// directory.
pub fn report(cfg: &Config, s: &Settings) -> Result<String> {
    let mut ablation = Vec::new();
    for dir in subdirs(&s.output.join("train"))? {
        let path = dir.join("summary.csv");
        if !path.exists() {
            continue;
        }
        for rec in read_csv(&path)? {
            ablation.push(AblationRow {
                recipe: rec[0].to_string(),
                mode: rec[1].to_string(),
                val_auc: parse_f64(&rec[2], &path)?,
            });
        }
    }
    if ablation.is_empty() {
        return Err(Error::Data(format!(
            "no trained runs under {}",
            s.output.join("train").display()
        )));
    }
    let order = |r: &AblationRow| {
        let k = RecipeKind::ALL
            .iter()
            .position(|k| k.name() == r.recipe)
            .unwrap_or(usize::MAX);
        let m = usize::from(r.mode.parse::<RecipeMode>().ok() == Some(RecipeMode::Stacked));
        (m, k)
    };
    ablation.sort_by_key(order);

    let mut bench = Vec::new();
    for dir in subdirs(&s.output.join("extract"))? {
        let path = dir.join("bench.csv");
        if !path.exists() {
            continue;
        }
        for rec in read_csv(&path)? {
            bench.push(BenchRow {
                algorithm: rec[0].to_string(),
                time_ms: parse_f64(&rec[1], &path)?,
                feat_size: parse_f64(&rec[4], &path)? as usize,
                accuracy: if rec[5].is_empty() {
                    None
                } else {
                    Some(parse_f64(&rec[5], &path)?)
                },
            });
        }
    }
    let mut accuracy = Vec::new();
    for dir in subdirs(&s.output.join("match"))? {
        let path = dir.join("report.csv");
        if !path.exists() {
            continue;
        }
        let recs = read_csv(&path)?;
        let get = |k: &str| -> Result<f64> {
            let rec = recs
                .iter()
                .find(|r| &r[0] == k)
                .ok_or_else(|| Error::Data(format!("{}: missing {k}", path.display())))?;
            parse_f64(&rec[1], &path)
        };
        accuracy.push(AccuracyRow {
            algorithm: dir.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            pad_accuracy: get("max-accuracy.pad_accuracy")?,
            im_accuracy: get("im.im_accuracy")?,
        });
    }

    let out = s.output.join("report");
    echo_config(&out, cfg)?;
    let mut md = String::from("## Validation AUC by recipe\n\n");
    md.push_str(&ablation_table(&ablation));
    write(&out.join("ablation.csv"), ablation_csv(&ablation))?;
    if !bench.is_empty() {
        md.push_str("\n## Feature extraction\n\n");
        md.push_str(&bench_table(&bench));
    }
    if !accuracy.is_empty() {
        md.push_str("\n## Integrated matching\n\n");
        md.push_str(&accuracy_table(&accuracy));
    }
    write(&out.join("report.md"), &md)?;
    Ok(md)
}
