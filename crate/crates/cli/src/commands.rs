use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use slide_mil::cohort::{parse_manifest, validate_cohort, Label, SlideManifest, SlideRecord, Variant};
use slide_mil::encoder::{
    bag_path, encode_slide, load_bag, load_precomputed, save_bag, EmbeddingBag, EncoderSpec,
};
use slide_mil::experiment::{
    manifest_labels, predict_scores, run_experiment, write_assignment_csv, Evaluation, ExperimentConfig,
    ExternalSet,
};
use slide_mil::metrics::{MetricReport, RocCurve};
use slide_mil::mil::AbmilParams;
use slide_mil::preprocess::{
    build_tile_grid, extract_patches, filter_tiles, segment_tissue, RasterImage, SegmentParams, TileGrid, TissueMask,
};
use slide_mil::synth::{generate_bags, generate_slide, SynthBagSpec, SynthSlideSpec};
use slide_mil::{Error, Result};

use crate::plot::{confusion_svg, roc_svg};
use crate::{
    exit_code, EncodeArgs, EncoderChoice, EvaluateArgs, SegmentArgs, SegmentOpts, SynthBagsArgs, SynthSlideArgs,
    TileArgs, TileOpts, TrainArgs, EXIT_EMPTY_TISSUE, EXIT_OK,
};

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub(crate) fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io(io::Error::new(
            io::ErrorKind::NotFound,
            format!("{} does not exist", path.display()),
        )))
    }
}

/// Parsed manifest plus the directory relative URIs resolve against.
fn load_manifest(path: &Path) -> Result<(SlideManifest, PathBuf)> {
    require_file(path)?;
    let manifest = parse_manifest(BufReader::new(File::open(path)?))?;
    for w in validate_cohort(&manifest, &[]).warnings {
        log::warn!("{}: {w}", path.display());
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((manifest, base))
}

fn image_path(base: &Path, record: &SlideRecord) -> PathBuf {
    base.join(&record.image_uri)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))
}

fn segment_params(opts: &SegmentOpts) -> Result<SegmentParams> {
    let params = SegmentParams {
        sat_min: opts.sat_min,
        val_max: opts.val_max,
    };
    params.validate()?;
    Ok(params)
}

fn check_tile_opts(opts: &TileOpts) -> Result<()> {
    if opts.tile_size == 0 {
        return Err(Error::Contract("tile size must be positive".into()));
    }
    if !(0.0..=1.0).contains(&opts.min_tissue) {
        return Err(Error::Contract(format!("min tissue fraction must lie in [0, 1], got {}", opts.min_tissue)));
    }
    Ok(())
}

/// Runs `work` on every slide in parallel and returns the results sorted by
/// slide id. Failures are logged per slide; the exit code is that of the
/// first failure other than an empty slide, else 4 if any slide was empty.
fn per_slide<T: Send>(
    records: &[SlideRecord],
    jobs: usize,
    work: impl Fn(&SlideRecord) -> Result<T> + Sync,
) -> Result<(Vec<(String, T)>, i32)> {
    let mut results: Vec<(String, Result<T>)> = pool(jobs)?.install(|| {
        records
            .par_iter()
            .map(|r| (r.slide_id.clone(), work(r)))
            .collect()
    });
    results.sort_by(|a, b| a.0.cmp(&b.0));
    let mut done = Vec::new();
    let mut code = EXIT_OK;
    let mut empty = false;
    for (id, result) in results {
        match result {
            Ok(v) => done.push((id, v)),
            Err(e) => {
                log::error!("{id}: {e}");
                match exit_code(&e) {
                    EXIT_EMPTY_TISSUE => empty = true,
                    c if code == EXIT_OK => code = c,
                    _ => {}
                }
            }
        }
    }
    if code == EXIT_OK && empty {
        code = EXIT_EMPTY_TISSUE;
    }
    Ok((done, code))
}

fn emit_lines(header: &str, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{header}")?;
    for line in lines {
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn synth_slide(args: &SynthSlideArgs) -> Result<i32> {
    if args.blank > args.count {
        return Err(Error::Contract(format!("--blank {} exceeds --count {}", args.blank, args.count)));
    }
    let negatives = [Variant::Alk, Variant::Ros1, Variant::TripleNeg];
    let mut records = Vec::new();
    for i in 0..args.count {
        let id = format!("slide_{i:03}");
        let spec = SynthSlideSpec {
            width: args.width,
            height: args.height,
            n_blobs: if i >= args.count - args.blank { 0 } else { args.blobs },
            seed: args.seed.wrapping_add(i as u64),
            ..Default::default()
        };
        let (image, mask) = generate_slide(&spec)?;
        fs::create_dir_all(&args.out)?;
        image.save(args.out.join(format!("{id}.png")))?;
        mask.save_png(args.out.join(format!("{id}_mask.png")))?;
        let variant = if i % 2 == 0 { Variant::Egfr } else { negatives[(i / 2) % negatives.len()] };
        records.push(SlideRecord::new(&id, format!("{id}.png"), variant, 40.0, 0.25));
    }
    let manifest = SlideManifest::from_records(records)?;
    write_file(&args.out.join("manifest.csv"), manifest.to_csv_string())?;
    log::info!("wrote {} slides to {}", args.count, args.out.display());
    Ok(EXIT_OK)
}

pub fn synth_bags(args: &SynthBagsArgs) -> Result<i32> {
    let spec = SynthBagSpec {
        n_bags: args.n_bags,
        dim: args.dim,
        bag_size: (args.min_size, args.max_size),
        signal_strength: args.signal,
        noise: args.noise,
        positive_fraction: args.positive_fraction,
        seed: args.seed,
    };
    let cohort = generate_bags(&spec)?;
    cohort.write_to(&args.out)?;
    let mut truth = String::from("slide_id,label,n,signal_rows\n");
    for b in &cohort.bags {
        let rows: Vec<String> = b.signal_rows.iter().map(usize::to_string).collect();
        truth.push_str(&format!("{},{},{},{}\n", b.bag.slide_id, b.label, b.bag.n(), rows.join(" ")));
    }
    write_file(&args.out.join("truth.csv"), truth)?;
    log::info!("wrote {} bags to {}", cohort.bags.len(), args.out.display());
    Ok(EXIT_OK)
}

fn load_and_segment(base: &Path, record: &SlideRecord, params: &SegmentParams) -> Result<(RasterImage, TissueMask)> {
    let image = RasterImage::load(image_path(base, record))?;
    let mask = segment_tissue(&image, params)?;
    Ok((image, mask))
}

fn kept_tiles(record: &SlideRecord, image: &RasterImage, mask: &TissueMask, opts: &TileOpts) -> Result<(TileGrid, TileGrid)> {
    let grid = build_tile_grid(image.dims(), opts.tile_size)?;
    let kept = filter_tiles(&grid, mask, opts.min_tissue)?;
    log::debug!("{}: {} of {} tiles kept", record.slide_id, kept.len(), grid.len());
    Ok((grid, kept))
}

fn check_images(base: &Path, manifest: &SlideManifest) -> Result<()> {
    manifest.records().iter().try_for_each(|r| require_file(&image_path(base, r)))
}

pub fn segment(args: &SegmentArgs) -> Result<i32> {
    let params = segment_params(&args.segment)?;
    let (manifest, base) = load_manifest(&args.manifest)?;
    check_images(&base, &manifest)?;
    fs::create_dir_all(&args.out)?;
    let (done, code) = per_slide(manifest.records(), args.jobs, |r| {
        let (image, mask) = load_and_segment(&base, r, &params)?;
        mask.save_png(args.out.join(format!("{}_mask.png", r.slide_id)))?;
        let total = image.pixels().len() as f64;
        Ok(mask.count() as f64 / total)
    })?;
    emit_lines("slide_id,tissue_fraction", done.into_iter().map(|(id, f)| format!("{id},{f:.6}")))?;
    Ok(code)
}

pub fn tile(args: &TileArgs) -> Result<i32> {
    let params = segment_params(&args.segment)?;
    check_tile_opts(&args.tiles)?;
    let (manifest, base) = load_manifest(&args.manifest)?;
    check_images(&base, &manifest)?;
    fs::create_dir_all(&args.out)?;
    let (done, code) = per_slide(manifest.records(), args.jobs, |r| {
        let (image, mask) = load_and_segment(&base, r, &params)?;
        let (grid, kept) = kept_tiles(r, &image, &mask, &args.tiles)?;
        let mut csv = Vec::new();
        kept.write_csv(&mut csv)?;
        write_file(&args.out.join(format!("{}_tiles.csv", r.slide_id)), csv)?;
        if kept.is_empty() {
            return Err(Error::EmptyBag(r.slide_id.clone()));
        }
        Ok((grid.len(), kept.len()))
    })?;
    emit_lines(
        "slide_id,n_tiles,n_kept",
        done.into_iter().map(|(id, (n, k))| format!("{id},{n},{k}")),
    )?;
    Ok(code)
}

pub fn encode(args: &EncodeArgs) -> Result<i32> {
    let params = segment_params(&args.segment)?;
    check_tile_opts(&args.tiles)?;
    let (manifest, base) = load_manifest(&args.manifest)?;
    let spec = match args.encoder {
        EncoderChoice::Stub => EncoderSpec::stub(args.dim, args.seed),
        EncoderChoice::Precomputed => EncoderSpec::precomputed(args.dim),
    };
    if spec.dim == 0 {
        return Err(Error::Contract("--dim must be positive".into()));
    }
    let source = args.embeddings.clone().unwrap_or_else(|| base.clone());
    match args.encoder {
        EncoderChoice::Stub => check_images(&base, &manifest)?,
        EncoderChoice::Precomputed => manifest
            .ids()
            .try_for_each(|id| require_file(&bag_path(&source, id)))?,
    }
    fs::create_dir_all(&args.out)?;
    let (done, code) = per_slide(manifest.records(), args.jobs, |r| {
        let start = Instant::now();
        let bag = match args.encoder {
            EncoderChoice::Stub => {
                let (image, mask) = load_and_segment(&base, r, &params)?;
                let (_, kept) = kept_tiles(r, &image, &mask, &args.tiles)?;
                let patches = extract_patches(&image, &kept, &mask)?;
                encode_slide(&r.slide_id, &patches, &spec)?
            }
            EncoderChoice::Precomputed => load_precomputed(&source, &r.slide_id, &spec)?,
        };
        save_bag(&bag, bag_path(&args.out, &r.slide_id))?;
        Ok((bag.n(), start.elapsed().as_secs_f64()))
    })?;
    emit_lines(
        "slide_id,n_patches,seconds",
        done.into_iter().map(|(id, (n, s))| format!("{id},{n},{s:.3}")),
    )?;
    Ok(code)
}

/// Every manifest slide's bag, keyed by id; all files are checked to exist
/// before any is read.
fn load_bags(manifest: &SlideManifest, dir: &Path) -> Result<BTreeMap<String, EmbeddingBag>> {
    manifest.ids().try_for_each(|id| require_file(&bag_path(dir, id)))?;
    manifest
        .ids()
        .map(|id| {
            let bag = load_bag(bag_path(dir, id))?;
            if bag.slide_id != id {
                return Err(Error::Data(format!("bag file for {id} declares slide_id {}", bag.slide_id)));
            }
            Ok((id.to_string(), bag))
        })
        .collect()
}

fn write_evaluation(out: &Path, prefix: &str, title: &str, eval: &Evaluation) -> Result<()> {
    let mut csv = Vec::new();
    eval.roc.write_csv(&mut csv)?;
    write_file(&out.join(format!("{prefix}roc.csv")), csv)?;
    let curve = [(title.to_string(), &eval.roc, eval.report.auc)];
    write_file(&out.join(format!("{prefix}roc.svg")), roc_svg(&format!("ROC, {title}"), &curve))?;
    write_file(&out.join(format!("{prefix}confusion.json")), to_json(&eval.report.confusion)?)?;
    write_file(
        &out.join(format!("{prefix}confusion.svg")),
        confusion_svg(&format!("Confusion matrix, {title}"), &eval.report.confusion),
    )?;
    Ok(())
}

fn experiment_config(args: &TrainArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            require_file(path)?;
            ExperimentConfig::from_json(&fs::read_to_string(path)?)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
        config.train.seed = seed;
    }
    if let Some(t) = args.threshold {
        config.threshold = t;
    }
    config.validate()?;
    Ok(config)
}

pub fn train(args: &TrainArgs) -> Result<i32> {
    let config = experiment_config(args)?;
    let (manifest, base) = load_manifest(&args.manifest)?;
    let bags = load_bags(&manifest, args.bags.as_deref().unwrap_or(&base))?;
    let external = match (&args.external_manifest, &args.external_bags) {
        (Some(m), Some(dir)) => {
            let (ext, _) = load_manifest(m)?;
            let ext_bags = load_bags(&ext, dir)?;
            Some((ext, ext_bags))
        }
        _ => None,
    };

    let outcome = pool(args.jobs)?.install(|| {
        let ext = external.as_ref().map(|(m, b)| ExternalSet { manifest: m, bags: b });
        run_experiment(&manifest, &bags, &config, ext)
    })?;
    let report = &outcome.report;
    let out = &args.out;
    fs::create_dir_all(out)?;
    write_file(&out.join("report.json"), to_json(report)?)?;
    write_evaluation(out, "", "hold-out", &report.holdout)?;
    if let Some(ext) = &report.external {
        write_evaluation(out, "external_", "external", ext)?;
    }
    for f in &outcome.fold_results {
        let mut csv = Vec::new();
        f.history.write_csv(&mut csv)?;
        write_file(&out.join(format!("history_fold{}.csv", f.fold)), csv)?;
    }
    let mut split = Vec::new();
    write_assignment_csv(&mut split, &manifest, &outcome.split, &outcome.folds)?;
    write_file(&out.join("split.csv"), split)?;
    outcome.best_params().save(out.join("model.abml"))?;

    let cv_auc = report.cv_summary.get("auc").map(|s| s.rendered.clone()).unwrap_or_default();
    println!("cv auc {cv_auc}");
    println!("best fold {}", report.best_fold);
    println!("holdout auc {:.3}", report.holdout.report.auc);
    if let Some(ext) = &report.external {
        println!("external auc {:.3}", ext.report.auc);
    }
    Ok(EXIT_OK)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<i32> {
    if !args.threshold.is_finite() {
        return Err(Error::Contract("threshold must be finite".into()));
    }
    require_file(&args.model)?;
    let (manifest, base) = load_manifest(&args.manifest)?;
    let bags = load_bags(&manifest, args.bags.as_deref().unwrap_or(&base))?;
    let params = AbmilParams::load(&args.model)?;
    let labels = manifest_labels(&manifest);
    let set: Vec<(EmbeddingBag, Label)> = manifest
        .ids()
        .map(|id| (bags[id].clone(), labels[id]))
        .collect();
    let scores = predict_scores(&params, &set)?;

    let mut table = String::from("slide_id,label,score\n");
    for ((bag, label), s) in set.iter().zip(&scores) {
        table.push_str(&format!("{},{label},{s}\n", bag.slide_id));
    }
    write_file(&args.out.join("scores.csv"), table)?;

    let label_list: Vec<Label> = set.iter().map(|(_, l)| *l).collect();
    let (report, roc): (MetricReport, RocCurve) = MetricReport::from_scores(&scores, &label_list, args.threshold)?;
    let eval = Evaluation { report, roc };
    write_file(&args.out.join("evaluation.json"), to_json(&eval)?)?;
    write_evaluation(&args.out, "", "evaluation", &eval)?;
    println!("auc {:.3}", eval.report.auc);
    Ok(EXIT_OK)
}
