//! Meta-losses that score speculative parameters on the labelled target
//! train split: a nearest-centroid (prototypical) classifier over
//! penultimate features, or VAE reconstruction of target images.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::ImageSet;
use crate::ndmath::{sample_standard_normal, RandomStream};
use crate::net::{self, Model, ParamVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaBatchConfig {
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    /// Draw queries disjoint from the support set; when false the support
    /// examples are scored as their own queries.
    pub disjoint_queries: bool,
}

impl MetaBatchConfig {
    pub fn new(ways: usize, shots: usize, queries: usize) -> Result<Self> {
        let cfg = Self {
            ways,
            shots,
            queries,
            disjoint_queries: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ways < 2 || self.shots < 1 || self.queries < 1 {
            return Err(Error::config(format!(
                "episodes need ways >= 2, shots >= 1, queries >= 1; got {}-way {}-shot {} queries",
                self.ways, self.shots, self.queries
            )));
        }
        Ok(())
    }

    fn per_class(&self) -> usize {
        if self.disjoint_queries {
            self.shots + self.queries
        } else {
            self.shots.max(self.queries)
        }
    }
}

/// A K-way N-shot episode as indices into the labelled target set.
/// Labels are episode-local, `0..ways`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub classes: Vec<u8>,
    pub support: Vec<usize>,
    pub support_labels: Vec<usize>,
    pub query: Vec<usize>,
    pub query_labels: Vec<usize>,
}

/// Samples a K-way N-shot episode without replacement.
pub fn sample_episode(target: &ImageSet, cfg: &MetaBatchConfig, rng: &mut RandomStream) -> Result<Episode> {
    cfg.validate()?;
    let labels = target
        .labels()
        .ok_or_else(|| Error::config("episodes need a labelled target set"))?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); target.num_classes()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let need = cfg.per_class();
    let eligible: Vec<usize> = (0..by_class.len()).filter(|&c| by_class[c].len() >= need).collect();
    if eligible.len() < cfg.ways {
        return Err(Error::config(format!(
            "{}-way episodes with {need} examples per class need {} eligible classes, found {} \
             (class sizes {:?})",
            cfg.ways,
            cfg.ways,
            eligible.len(),
            by_class.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    let picked = rng.sample_indices(eligible.len(), cfg.ways);
    let mut ep = Episode {
        classes: Vec::with_capacity(cfg.ways),
        support: Vec::new(),
        support_labels: Vec::new(),
        query: Vec::new(),
        query_labels: Vec::new(),
    };
    for (local, &p) in picked.iter().enumerate() {
        let class = eligible[p];
        ep.classes.push(class as u8);
        let members = &by_class[class];
        let draw = rng.sample_indices(members.len(), need);
        let chosen: Vec<usize> = draw.iter().map(|&d| members[d]).collect();
        ep.support.extend_from_slice(&chosen[..cfg.shots]);
        ep.support_labels.extend(std::iter::repeat_n(local, cfg.shots));
        let queries = if cfg.disjoint_queries {
            &chosen[cfg.shots..]
        } else {
            &chosen[..cfg.queries]
        };
        ep.query.extend_from_slice(queries);
        ep.query_labels.extend(std::iter::repeat_n(local, cfg.queries));
    }
    Ok(ep)
}

/// Nearest-centroid loss with gradients w.r.t. every feature row.
#[derive(Debug, Clone)]
pub struct NccLoss {
    pub loss: f64,
    pub d_support: Array2<f64>,
    pub d_query: Array2<f64>,
}

fn centroids(support: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(Array2<f64>, Vec<usize>)> {
    if labels.len() != support.nrows() {
        return Err(Error::contract("one label per support row required"));
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut sums = Array2::zeros((k, support.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &l) in support.rows().into_iter().zip(labels) {
        let mut c = sums.row_mut(l);
        c += &row;
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::contract(format!("class {empty} has no support example")));
    }
    for (mut c, &n) in sums.rows_mut().into_iter().zip(&counts) {
        c /= n as f64;
    }
    Ok((sums, counts))
}

/// Mean cross-entropy of queries under logits `-||f - c_k||^2`, where `c_k`
/// is the mean support feature of class `k`, and its feature gradients.
pub fn ncc_meta_loss_grad(
    support: ArrayView2<'_, f64>,
    support_labels: &[usize],
    query: ArrayView2<'_, f64>,
    query_labels: &[usize],
) -> Result<NccLoss> {
    if support.ncols() != query.ncols() {
        return Err(Error::contract("support and query features differ in width"));
    }
    if query_labels.len() != query.nrows() || query.nrows() == 0 {
        return Err(Error::contract("one label per query row required, at least one query"));
    }
    let (cent, counts) = centroids(support, support_labels)?;
    let k = cent.nrows();
    let nq = query.nrows() as f64;
    let mut loss = 0.0;
    let mut d_query = Array2::zeros(query.dim());
    let mut d_cent = Array2::<f64>::zeros(cent.dim());
    let mut logits = vec![0.0; k];
    for ((f, &y), mut dq) in query.rows().into_iter().zip(query_labels).zip(d_query.rows_mut()) {
        if y >= k {
            return Err(Error::contract(format!("query class {y} has no centroid")));
        }
        for (c, l) in cent.rows().into_iter().zip(logits.iter_mut()) {
            *l = -f.iter().zip(c.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        let lse = net::losses::log_sum_exp(&logits);
        loss += (lse - logits[y]) / nq;
        for (j, c) in cent.rows().into_iter().enumerate() {
            // dL/dlogit_j, then dlogit_j/df = -2(f - c_j), dlogit_j/dc_j = 2(f - c_j)
            let g = ((logits[j] - lse).exp() - if j == y { 1.0 } else { 0.0 }) / nq;
            let mut dc = d_cent.row_mut(j);
            for ((dqv, dcv), (&fv, &cv)) in dq.iter_mut().zip(dc.iter_mut()).zip(f.iter().zip(c.iter())) {
                let diff = fv - cv;
                *dqv -= 2.0 * g * diff;
                *dcv += 2.0 * g * diff;
            }
        }
    }
    let mut d_support = Array2::zeros(support.dim());
    for (mut ds, &l) in d_support.rows_mut().into_iter().zip(support_labels) {
        ds.assign(&(&d_cent.row(l) / counts[l] as f64));
    }
    Ok(NccLoss {
        loss,
        d_support,
        d_query,
    })
}

pub fn ncc_meta_loss(
    support: ArrayView2<'_, f64>,
    support_labels: &[usize],
    query: ArrayView2<'_, f64>,
    query_labels: &[usize],
) -> Result<f64> {
    Ok(ncc_meta_loss_grad(support, support_labels, query, query_labels)?.loss)
}

/// Mean negative ELBO over `batch` at `theta`, latent noise drawn from `rng`.
pub fn reconstruction_meta_loss(
    model: &Model,
    theta: &ParamVector,
    batch: ArrayView2<'_, f64>,
    rng: &mut RandomStream,
) -> Result<f64> {
    let meta = MetaBatch::reconstruction(model, batch.to_owned(), rng)?;
    meta_loss(model, theta, &meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaObjective {
    Ncc,
    Reconstruction,
}

/// Everything a meta-loss evaluation consumes, including its randomness,
/// so repeated evaluations at different parameters are comparable.
#[derive(Debug, Clone)]
pub enum MetaBatch {
    Ncc {
        support: Array2<f64>,
        support_labels: Vec<usize>,
        query: Array2<f64>,
        query_labels: Vec<usize>,
    },
    Reconstruction {
        images: Array2<f64>,
        noise: Array2<f64>,
    },
}

impl MetaBatch {
    pub fn from_episode(target: &ImageSet, episode: &Episode) -> Self {
        MetaBatch::Ncc {
            support: target.images().select(Axis(0), &episode.support),
            support_labels: episode.support_labels.clone(),
            query: target.images().select(Axis(0), &episode.query),
            query_labels: episode.query_labels.clone(),
        }
    }

    pub fn reconstruction(model: &Model, images: Array2<f64>, rng: &mut RandomStream) -> Result<Self> {
        if images.nrows() == 0 {
            return Err(Error::contract("reconstruction meta-loss needs a non-empty batch"));
        }
        let latent = model
            .spec()
            .latent_dim()
            .ok_or_else(|| Error::contract("reconstruction meta-loss needs a VAE head"))?;
        let noise = Array2::from_shape_fn((images.nrows(), latent), |_| sample_standard_normal(rng));
        Ok(MetaBatch::Reconstruction { images, noise })
    }

    pub fn objective(&self) -> MetaObjective {
        match self {
            MetaBatch::Ncc { .. } => MetaObjective::Ncc,
            MetaBatch::Reconstruction { .. } => MetaObjective::Reconstruction,
        }
    }
}

pub fn meta_loss(model: &Model, theta: &ParamVector, batch: &MetaBatch) -> Result<f64> {
    match batch {
        MetaBatch::Ncc {
            support,
            support_labels,
            query,
            query_labels,
        } => {
            let stacked = concatenate(Axis(0), &[support.view(), query.view()]).expect("same width");
            let trace = net::features(model, theta, stacked.view())?;
            let f = trace.output();
            let ns = support.nrows();
            ncc_meta_loss(f.slice(s![..ns, ..]), support_labels, f.slice(s![ns.., ..]), query_labels)
        }
        MetaBatch::Reconstruction { images, noise } => {
            let losses = net::losses::vae_losses(model, theta, images.view(), noise.view())?;
            Ok(losses.iter().map(|l| l.total).sum::<f64>() / losses.len() as f64)
        }
    }
}

/// Meta-loss value and its exact gradient with respect to `theta`.
pub fn meta_grad(model: &Model, theta: &ParamVector, batch: &MetaBatch) -> Result<(f64, ParamVector)> {
    match batch {
        MetaBatch::Ncc {
            support,
            support_labels,
            query,
            query_labels,
        } => {
            let stacked = concatenate(Axis(0), &[support.view(), query.view()]).expect("same width");
            let trace = net::features(model, theta, stacked.view())?;
            let ns = support.nrows();
            let ncc = {
                let f = trace.output();
                ncc_meta_loss_grad(f.slice(s![..ns, ..]), support_labels, f.slice(s![ns.., ..]), query_labels)?
            };
            let d = concatenate(Axis(0), &[ncc.d_support.view(), ncc.d_query.view()]).expect("same width");
            let grad = net::feature_backward(model, theta, trace, d)?;
            Ok((ncc.loss, grad))
        }
        MetaBatch::Reconstruction { images, noise } => {
            let eval = net::vae_batch(model, theta, images.view(), noise.view())?;
            let n = images.nrows() as f64;
            let grad = eval.grads.weighted_sum(&vec![1.0 / n; images.nrows()])?;
            Ok((eval.losses.iter().sum::<f64>() / n, grad))
        }
    }
}
