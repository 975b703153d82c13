use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};

use super::config::{ExperimentConfig, Method, Task};
use super::probe::linear_probe;
use super::report::{export_report, DomainStats, EpochRecord, MetricsReport, WeightRow};
use crate::data::{
    build_mixed_source, load_idx_images, load_idx_labels, synth_domains, Domain, ImageSet, MixedSplit, SplitSpec,
};
use crate::metaloss::{meta_grad, sample_episode, MetaBatch, MetaObjective};
use crate::ndmath::{sample_standard_normal, splitmix64, RandomStream};
use crate::net::{self, batch_grads, LossKind, MlpSpec, Model, ParamVector};
use crate::weighters::{
    bdw_step_with, dw_step, l2rw_step, nn_weights, prune_bdw, prune_dw, weighted_step, BetaWeightTable,
    ScalarWeightTable,
};
use crate::{Error, Result};

/// Sub-directories of `--data-dir` holding IDX files, in domain order.
pub const IDX_DOMAINS: [&str; 3] = ["mnist", "fashion", "kmnist"];

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_WEIGHTS: u64 = 4;
const STREAM_META: u64 = 5;
const STREAM_SYNTH: u64 = 7;

const EVAL_CHUNK: usize = 256;

fn load_idx_domain(dir: &Path, name: &str) -> Result<Domain> {
    let part = |images: &str, labels: &str| -> Result<ImageSet> {
        let set = load_idx_images(dir.join(images))?;
        set.with_labels(load_idx_labels(dir.join(labels))?)
    };
    Ok(Domain {
        name: name.to_string(),
        train: part("train-images-idx3-ubyte", "train-labels-idx1-ubyte")?.with_domain(name),
        test: part("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?.with_domain(name),
    })
}

/// IDX domains found under `data_dir`, or freshly generated synthetic
/// domains sized for the configured split.
pub fn load_domains(cfg: &ExperimentConfig) -> Result<Vec<Domain>> {
    match &cfg.data_dir {
        Some(root) => {
            let mut out = Vec::new();
            for name in IDX_DOMAINS {
                let dir = root.join(name);
                if dir.is_dir() {
                    out.push(load_idx_domain(&dir, name)?);
                }
            }
            if out.is_empty() {
                return Err(Error::config(format!(
                    "no domain directories ({}) under {}",
                    IDX_DOMAINS.join(", "),
                    root.display()
                )));
            }
            Ok(out)
        }
        None => {
            let train = cfg.source_cap + cfg.target_train;
            let total = train + cfg.target_test;
            let mut rng = RandomStream::new(cfg.seed, STREAM_SYNTH);
            let sets = synth_domains(&mut rng, total);
            Ok(sets
                .into_iter()
                .map(|set| {
                    let name = set.domain_name(0).unwrap_or_default().to_string();
                    Domain {
                        train: set.select(&(0..train).collect::<Vec<_>>()),
                        test: set.select(&(train..total).collect::<Vec<_>>()),
                        name,
                    }
                })
                .collect())
        }
    }
}

/// Builds the source / target-train / target-test split for `cfg`.
pub fn prepare_split(cfg: &ExperimentConfig) -> Result<MixedSplit> {
    let domains = load_domains(cfg)?;
    let target = cfg.target.clone().unwrap_or_else(|| domains[0].name.clone());
    let names: Vec<&str> = domains.iter().map(|d| d.name.as_str()).collect();
    let spec = SplitSpec {
        target,
        target_train: cfg.target_train,
        target_test: cfg.target_test,
        source_caps: Default::default(),
        seed: cfg.seed,
    }
    .with_uniform_cap(&names, cfg.source_cap);
    build_mixed_source(&domains, &spec)
}

/// Runs `cfg` end to end and writes the report when `cfg.out` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let split = prepare_split(cfg)?;
    let report = run_on_split(cfg, &split)?;
    if let Some(out) = &cfg.out {
        export_report(&report, out)?;
    }
    Ok(report)
}

pub fn build_model(cfg: &ExperimentConfig, pixels: usize) -> Result<Model> {
    let spec = match cfg.task {
        Task::Vae => MlpSpec::vae(vec![pixels, cfg.hidden, cfg.latent]),
        Task::Rotation => MlpSpec::classifier(vec![pixels, cfg.hidden, 4]),
    };
    Model::new(spec)
}

/// Mean negative ELBO over `images`. The latent noise of each image is a
/// function of the evaluation seed and the image's pixels only, so the
/// value does not depend on order or duplication.
pub fn evaluate_vae(model: &Model, theta: &ParamVector, images: ArrayView2<'_, f64>, eval_seed: u64) -> Result<f64> {
    if images.nrows() == 0 {
        return Err(Error::contract("cannot evaluate on an empty test set"));
    }
    let latent = model
        .spec()
        .latent_dim()
        .ok_or_else(|| Error::contract("VAE evaluation needs a VAE head"))?;
    let mut total = 0.0;
    for chunk in images.axis_chunks_iter(Axis(0), EVAL_CHUNK) {
        let mut noise = Array2::zeros((chunk.nrows(), latent));
        for (row, mut eps) in chunk.rows().into_iter().zip(noise.rows_mut()) {
            let mut rng = eval_stream(eval_seed, row.iter().copied());
            eps.iter_mut().for_each(|e| *e = sample_standard_normal(&mut rng));
        }
        total += net::losses::vae_losses(model, theta, chunk, noise.view())?
            .iter()
            .map(|l| l.total)
            .sum::<f64>();
    }
    Ok(total / images.nrows() as f64)
}

/// Random stream keyed by the evaluation seed and an image's content.
pub fn eval_stream(eval_seed: u64, pixels: impl IntoIterator<Item = f64>) -> RandomStream {
    let key = pixels
        .into_iter()
        .fold(0x9e37_79b9_7f4a_7c15, |h: u64, v| splitmix64(h ^ v.to_bits()));
    RandomStream::new(eval_seed, key)
}

/// Mean rotation-prediction loss over `images`.
pub fn evaluate_rotation(model: &Model, theta: &ParamVector, images: ArrayView2<'_, f64>) -> Result<f64> {
    if images.nrows() == 0 {
        return Err(Error::contract("cannot evaluate on an empty test set"));
    }
    let mut total = 0.0;
    for chunk in images.axis_chunks_iter(Axis(0), EVAL_CHUNK) {
        total += net::rotation_losses(model, theta, chunk)?.iter().sum::<f64>();
    }
    Ok(total / images.nrows() as f64)
}

fn penultimate(model: &Model, theta: &ParamVector, images: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(net::features(model, theta, images)?.output().clone())
}

enum Weights {
    Beta(BetaWeightTable),
    Scalar(ScalarWeightTable),
    Fixed { weights: Vec<f64>, active: Vec<bool> },
    Ephemeral { active: Vec<bool> },
}

impl Weights {
    fn active(&self) -> &[bool] {
        match self {
            Weights::Beta(t) => t.active_mask(),
            Weights::Scalar(t) => t.active_mask(),
            Weights::Fixed { active, .. } | Weights::Ephemeral { active } => active,
        }
    }

    fn expected(&self) -> Option<Vec<f64>> {
        match self {
            Weights::Beta(t) => Some(t.expected_weights()),
            Weights::Scalar(t) => Some(t.weights().to_vec()),
            Weights::Fixed { weights, .. } => Some(weights.clone()),
            Weights::Ephemeral { .. } => None,
        }
    }

    fn rows(&self, source: &ImageSet) -> Vec<WeightRow> {
        let expected = self.expected();
        let active = self.active();
        (0..active.len())
            .map(|i| {
                let (a, b) = match self {
                    Weights::Beta(t) => (Some(t.params(i).a()), Some(t.params(i).b())),
                    _ => (None, None),
                };
                WeightRow {
                    id: i,
                    domain: source.domain_name(i).map(str::to_string),
                    a,
                    b,
                    weight: expected.as_ref().map(|e| e[i]),
                    active: active[i],
                }
            })
            .collect()
    }
}

fn initial_weights(cfg: &ExperimentConfig, split: &MixedSplit) -> Result<Weights> {
    let n = split.source.len();
    Ok(match cfg.method {
        Method::Bdw => Weights::Beta(BetaWeightTable::new(n)),
        Method::Dw => Weights::Scalar(ScalarWeightTable::new(n)),
        Method::L2rw => Weights::Ephemeral { active: vec![true; n] },
        Method::None => Weights::Fixed {
            weights: vec![1.0; n],
            active: vec![true; n],
        },
        Method::Nn => Weights::Fixed {
            weights: nn_weights(split.source.images().view(), split.target_train.images().view(), cfg.nn_beta)?,
            active: vec![true; n],
        },
        Method::Oracle => {
            let tags = split
                .source
                .domains()
                .ok_or_else(|| Error::config("the oracle needs domain tags on the source set"))?;
            let target = split.target_tag();
            let active: Vec<bool> = tags.iter().map(|&t| Some(t) == target).collect();
            Weights::Fixed {
                weights: active.iter().map(|&a| f64::from(u8::from(a))).collect(),
                active,
            }
        }
    })
}

fn draw_meta(
    cfg: &ExperimentConfig,
    model: &Model,
    target: &ImageSet,
    rng: &mut RandomStream,
) -> Result<MetaBatch> {
    match cfg.meta_objective() {
        MetaObjective::Reconstruction => {
            let idx = rng.sample_indices(target.len(), cfg.meta_batch.min(target.len()));
            MetaBatch::reconstruction(model, target.images().select(Axis(0), &idx), rng)
        }
        MetaObjective::Ncc => Ok(MetaBatch::from_episode(target, &sample_episode(target, &cfg.meta, rng)?)),
    }
}

fn domain_stats(source: &ImageSet, weights: &Weights, initially_active: &[bool]) -> Vec<DomainStats> {
    let (Some(tags), names) = (source.domains(), source.domain_names()) else {
        return Vec::new();
    };
    let expected = weights.expected();
    let active = weights.active();
    names
        .iter()
        .enumerate()
        .map(|(d, name)| {
            let members: Vec<usize> = (0..tags.len()).filter(|&i| tags[i] as usize == d).collect();
            let mean_weight = expected.as_ref().and_then(|e| {
                (!members.is_empty()).then(|| members.iter().map(|&i| e[i]).sum::<f64>() / members.len() as f64)
            });
            DomainStats {
                name: name.clone(),
                count: members.len(),
                active: members.iter().filter(|&&i| active[i]).count(),
                pruned: members.iter().filter(|&&i| initially_active[i] && !active[i]).count(),
                mean_weight,
            }
        })
        .collect()
}

/// Trains on a prepared split. All randomness comes from `cfg.seed` (one
/// stream each for initialisation, shuffling, latent noise, weight
/// sampling and meta-batches) and `cfg.eval_seed`.
pub fn run_on_split(cfg: &ExperimentConfig, split: &MixedSplit) -> Result<MetricsReport> {
    cfg.validate()?;
    let source = &split.source;
    if source.is_empty() {
        return Err(Error::config("the source set is empty"));
    }
    let model = build_model(cfg, source.pixels())?;
    let kind = match cfg.task {
        Task::Vae => LossKind::Vae,
        Task::Rotation => LossKind::Rotation,
    };
    let mut weights = initial_weights(cfg, split)?;
    let initially_active = weights.active().to_vec();
    let mut meta_rng = RandomStream::new(cfg.seed, STREAM_META);
    if cfg.method.uses_meta() {
        // Surface episode/batch problems before any training step.
        draw_meta(cfg, &model, &split.target_train, &mut meta_rng.clone())?;
    }
    let probe_labels = match (cfg.task, split.target_train.labels(), split.target_test.labels()) {
        (Task::Rotation, Some(tr), Some(te)) => Some((tr, te)),
        _ => None,
    };

    let mut theta = model.init_params(&mut RandomStream::new(cfg.seed, STREAM_INIT));
    let mut shuffle_rng = RandomStream::new(cfg.seed, STREAM_SHUFFLE);
    let mut noise_rng = RandomStream::new(cfg.seed, STREAM_NOISE);
    let mut weight_rng = RandomStream::new(cfg.seed, STREAM_WEIGHTS);
    let hp = cfg.hyper;

    let mut report = MetricsReport {
        method: cfg.method.name().into(),
        task: cfg.task.name().into(),
        target: split.target_name.clone(),
        ..Default::default()
    };
    let mut total_pruned = 0;
    for epoch in 0..hp.epochs {
        let started = Instant::now();
        let active = weights.active();
        let mut order: Vec<usize> = (0..active.len()).filter(|&i| active[i]).collect();
        shuffle_rng.shuffle(&mut order);
        let (mut meta_sum, mut meta_count, mut batches) = (0.0, 0usize, 0usize);
        for batch in order.chunks(hp.batch_size) {
            let x = source.images().select(Axis(0), batch);
            let grads = batch_grads(&model, &theta, x.view(), kind, &mut noise_rng)?.grads;
            let (next, meta_loss) = match &mut weights {
                Weights::Beta(table) => {
                    let mb = draw_meta(cfg, &model, &split.target_train, &mut meta_rng)?;
                    let step = bdw_step_with(
                        &theta,
                        &grads,
                        batch,
                        table,
                        &hp,
                        |p| meta_grad(&model, p, &mb),
                        &mut weight_rng,
                        cfg.force_unit_weights,
                    )?;
                    (step.outcome.theta, step.outcome.meta_loss)
                }
                Weights::Scalar(table) => {
                    let mb = draw_meta(cfg, &model, &split.target_train, &mut meta_rng)?;
                    let out = dw_step(&theta, &grads, batch, table, &hp, |p| meta_grad(&model, p, &mb))?;
                    (out.theta, out.meta_loss)
                }
                Weights::Ephemeral { .. } => {
                    let mb = draw_meta(cfg, &model, &split.target_train, &mut meta_rng)?;
                    let out = l2rw_step(&theta, &grads, &hp, |p| meta_grad(&model, p, &mb))?;
                    (out.theta, out.meta_loss)
                }
                Weights::Fixed { weights, .. } => {
                    let w: Vec<f64> = batch.iter().map(|&i| weights[i]).collect();
                    (weighted_step(&theta, &grads, &w, hp.alpha)?, None)
                }
            };
            if !next.is_finite() {
                return Err(Error::domain(format!(
                    "parameters diverged in epoch {epoch}; lower the learning rate"
                )));
            }
            theta = next;
            if let Some(l) = meta_loss {
                meta_sum += l;
                meta_count += 1;
            }
            batches += 1;
        }
        total_pruned += if cfg.prune_enabled {
            match &mut weights {
                Weights::Beta(table) => prune_bdw(table, &cfg.prune)?,
                Weights::Scalar(table) => prune_dw(table, cfg.prune.lambda)?,
                _ => 0,
            }
        } else {
            0
        };
        report.epoch_seconds.push(started.elapsed().as_secs_f64());

        let test = split.target_test.images().view();
        let (test_loss, test_accuracy) = match cfg.task {
            Task::Vae => (evaluate_vae(&model, &theta, test, cfg.eval_seed)?, None),
            Task::Rotation => {
                let acc = match probe_labels {
                    Some((tr, te)) => Some(linear_probe(
                        penultimate(&model, &theta, split.target_train.images().view())?.view(),
                        tr,
                        penultimate(&model, &theta, test)?.view(),
                        te,
                    )?),
                    None => None,
                };
                (evaluate_rotation(&model, &theta, test)?, acc)
            }
        };
        let expected = weights.expected();
        report.epochs.push(EpochRecord {
            epoch,
            batches,
            meta_loss: (meta_count > 0).then(|| meta_sum / meta_count as f64),
            test_loss,
            test_accuracy,
            active: weights.active().iter().filter(|&&a| a).count(),
            pruned: total_pruned,
            mean_weight: expected.map(|e| e.iter().sum::<f64>() / e.len() as f64),
            domains: domain_stats(source, &weights, &initially_active),
        });
    }
    report.final_weights = weights.rows(source);
    Ok(report)
}
