//! Stage 1: learn anchors and a dense non-negative word-to-anchor transform
//! that reconstruct a teacher embedding under the cosine loss.

mod teacher;

pub use teacher::{synth_task_teacher, synthetic_teacher, SyntheticTeacher, SyntheticTeacherSpec, TeacherEmbedding, TEACHER_MAGIC};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::codebook::{build_vp, compose, lookup, AnchorMatrix, SparseCodebook, TokenBatch};
use crate::error::{AdeError, Result};
use crate::numcore::rng::{normal_vec, seeded, substream};
use crate::numcore::{axpy, dot, gemm_acc, norm, softmax, Adam, Tensor};

/// How anchors and the transform are initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistillInit {
    /// spherical k-means centroids for A, softmax similarities for T
    #[default]
    KMeans,
    /// Gaussian anchors, uniform T rows
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub num_anchors: usize,
    pub steps: usize,
    pub learning_rate: f64,
    /// L1 weight on `mean(T)`
    pub sparsity: f64,
    /// rows per step; `None` uses every row
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub init: DistillInit,
    pub kmeans_iters: usize,
    /// temperature of the similarity softmax that seeds T
    pub init_temperature: f64,
    /// optional per-row weights (e.g. corpus frequencies)
    pub row_weights: Option<Vec<f64>>,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            num_anchors: 16,
            steps: 1000,
            learning_rate: 1e-3,
            sparsity: 1e-3,
            batch_size: None,
            seed: 0,
            init: DistillInit::KMeans,
            kmeans_iters: 10,
            init_temperature: 0.1,
            row_weights: None,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self, num_words: usize) -> Result<()> {
        if self.num_anchors == 0 {
            return Err(AdeError::config("K must be at least 1"));
        }
        if !(self.sparsity >= 0.0) || !self.sparsity.is_finite() {
            return Err(AdeError::config("sparsity penalty must be a finite value ≥ 0"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(AdeError::config("learning rate must be positive"));
        }
        if self.batch_size == Some(0) {
            return Err(AdeError::config("batch size must be at least 1"));
        }
        if !(self.init_temperature > 0.0) {
            return Err(AdeError::config("init temperature must be positive"));
        }
        if let Some(w) = &self.row_weights {
            if w.len() != num_words || w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(AdeError::config("row weights must be N finite values ≥ 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DistillOutcome {
    pub anchors: AnchorMatrix,
    /// dense `N × K` non-negative transform
    pub transform: Tensor,
    /// objective (cosine loss plus penalty) before each step
    pub history: Vec<f64>,
    /// `1 − mean cosine` of the dense reconstruction over active rows
    pub final_loss: f64,
    pub final_mean_cosine: f64,
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    (na > 0.0 && nb > 0.0).then(|| dot(a, b) / (na * nb))
}

fn check_pair(student: &Tensor, teacher: &Tensor) -> Result<()> {
    if student.shape().len() != 2 || student.shape() != teacher.shape() {
        return Err(AdeError::shape(format!(
            "student {:?} and teacher {:?} must both be M×d",
            student.shape(),
            teacher.shape()
        )));
    }
    if student.rows() == 0 {
        return Err(AdeError::Contract("distillation loss needs at least one row".into()));
    }
    Ok(())
}

/// `1 − mean_i cos(student_i, teacher_i)`.
pub fn distill_loss(student: &Tensor, teacher: &Tensor) -> Result<f64> {
    Ok(distill_loss_grad(student, teacher)?.0)
}

/// The loss and its gradient with respect to `student`.
pub fn distill_loss_grad(student: &Tensor, teacher: &Tensor) -> Result<(f64, Tensor)> {
    check_pair(student, teacher)?;
    let m = student.rows() as f64;
    let mut grad = Tensor::zeros(student.shape().to_vec());
    let mut total = 0.0;
    for i in 0..student.rows() {
        let (s, e) = (student.row(i), teacher.row(i));
        let c = cosine(s, e).ok_or_else(|| AdeError::Contract(format!("row {i} has zero norm")))?;
        total += c;
        cosine_grad(s, e, c, -1.0 / m, grad.row_mut(i));
    }
    Ok((1.0 - total / m, grad))
}

/// Adds `scale · ∂cos(s, e)/∂s` to `out`.
fn cosine_grad(s: &[f64], e: &[f64], c: f64, scale: f64, out: &mut [f64]) {
    let (ns, ne) = (norm(s), norm(e));
    axpy(scale / (ns * ne), e, out);
    axpy(-scale * c / (ns * ns), s, out);
}

/// Mean cosine between each teacher row and its reconstruction, over rows
/// with non-zero teacher norm. A zero reconstruction counts as cosine 0.
pub fn mean_cosine(reconstruction: &Tensor, teacher: &TeacherEmbedding) -> Result<f64> {
    check_pair(reconstruction, teacher.values())?;
    let rows = teacher.active_rows();
    if rows.is_empty() {
        return Err(AdeError::data("teacher has no non-zero rows"));
    }
    let total: f64 = rows
        .iter()
        .map(|&i| cosine(reconstruction.row(i), teacher.values().row(i)).unwrap_or(0.0))
        .sum();
    Ok(total / rows.len() as f64)
}

/// `T · A`, the dense reconstruction.
pub fn dense_reconstruction(transform: &Tensor, anchors: &AnchorMatrix) -> Result<Tensor> {
    crate::numcore::matmul(transform, anchors.values())
}

/// Every word composed from its sparse codebook entry.
pub fn sparse_reconstruction(cb: &SparseCodebook, anchors: &AnchorMatrix) -> Result<Tensor> {
    let n = cb.num_words();
    let tokens = TokenBatch::new((0..n).collect(), vec![true; n], 1, n)?;
    let composed = compose(&lookup(cb, anchors, &tokens)?)?;
    composed.reshape(vec![n, anchors.dim()])
}

/// Spherical k-means over the unit-normalised active teacher rows.
fn kmeans_centroids(unit: &[Vec<f64>], k: usize, iters: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, 1);
    let d = unit[0].len();
    let mut order: Vec<usize> = (0..unit.len()).collect();
    order.shuffle(&mut rng);
    let mut centroids: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut c = unit[order[j % order.len()]].clone();
            if j >= order.len() {
                // more anchors than rows: jitter repeated seeds apart
                axpy(1.0, &normal_vec(&mut rng, d, 0.05), &mut c);
            }
            c
        })
        .collect();
    for _ in 0..iters {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for row in unit {
            let best = (0..k)
                .max_by(|&a, &b| dot(row, &centroids[a]).total_cmp(&dot(row, &centroids[b])).then(b.cmp(&a)))
                .expect("k ≥ 1");
            axpy(1.0, row, &mut sums[best]);
            counts[best] += 1;
        }
        for j in 0..k {
            let n = norm(&sums[j]);
            if counts[j] > 0 && n > 0.0 {
                centroids[j] = sums[j].iter().map(|v| v / n).collect();
            }
        }
    }
    centroids
}

fn initialise(teacher: &TeacherEmbedding, cfg: &DistillConfig, active: &[usize]) -> Result<(Tensor, Tensor)> {
    let (n, d, k) = (teacher.num_words(), teacher.dim(), cfg.num_anchors);
    let e = teacher.values();
    let mean_norm = active.iter().map(|&i| norm(e.row(i))).sum::<f64>() / active.len() as f64;
    match cfg.init {
        DistillInit::Random => {
            let mut rng = substream(cfg.seed, 2);
            let anchors = Tensor::new(vec![k, d], normal_vec(&mut rng, k * d, mean_norm / (d as f64).sqrt()))?;
            let mut t = Tensor::new(vec![n, k], vec![1.0; n * k])?;
            project_rows(&mut t);
            Ok((anchors, t))
        }
        DistillInit::KMeans => {
            let unit: Vec<Vec<f64>> = active
                .iter()
                .map(|&i| {
                    let r = e.row(i);
                    let nr = norm(r);
                    r.iter().map(|v| v / nr).collect()
                })
                .collect();
            let centroids = kmeans_centroids(&unit, k, cfg.kmeans_iters, cfg.seed);
            let mut anchors = Tensor::zeros(vec![k, d]);
            for (j, c) in centroids.iter().enumerate() {
                anchors.row_mut(j).iter_mut().zip(c).for_each(|(a, v)| *a = v * mean_norm);
            }
            let mut t = Tensor::zeros(vec![n, k]);
            for i in 0..n {
                let nr = norm(e.row(i));
                let sims: Vec<f64> = centroids
                    .iter()
                    .map(|c| if nr > 0.0 { dot(e.row(i), c) / nr / cfg.init_temperature } else { 0.0 })
                    .collect();
                t.row_mut(i).copy_from_slice(&softmax(&sims));
            }
            project_rows(&mut t);
            Ok((anchors, t))
        }
    }
}

/// Clamp to ≥ 0, then scale each row to unit L2 norm. A row that clamps to
/// all zeros is reset to a one-hot at its largest pre-clamp entry.
fn project_rows(t: &mut Tensor) {
    for i in 0..t.rows() {
        let row = t.row_mut(i);
        let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a))).unwrap_or(0);
        row.iter_mut().for_each(|v| *v = v.max(0.0));
        let n = norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        } else {
            row[argmax] = 1.0;
        }
    }
}

struct Objective {
    loss: f64,
    dt: Vec<f64>,
    da: Vec<f64>,
}

/// Weighted cosine loss over `rows` plus `λ·mean(T)` restricted to `rows`.
fn objective(e: &Tensor, t: &Tensor, a: &Tensor, rows: &[usize], weights: &[f64], lambda: f64) -> Objective {
    let (k, d) = (a.rows(), a.cols());
    let mut dt = vec![0.0; t.len()];
    let mut da = vec![0.0; a.len()];
    let wsum: f64 = rows.iter().map(|&i| weights[i]).sum();
    let penalty_scale = lambda / (rows.len() * k) as f64;
    let mut cos_total = 0.0;
    let mut l1 = 0.0;
    let mut s = vec![0.0; d];
    let mut ds = vec![0.0; d];
    for &i in rows {
        let ti = t.row(i);
        s.iter_mut().for_each(|v| *v = 0.0);
        gemm_acc(ti, a.data(), 1, k, d, &mut s);
        l1 += ti.iter().sum::<f64>();
        let dti = &mut dt[i * k..(i + 1) * k];
        dti.iter_mut().for_each(|v| *v = penalty_scale);
        let w = weights[i] / wsum;
        let Some(c) = cosine(&s, e.row(i)) else { continue };
        cos_total += w * c;
        ds.iter_mut().for_each(|v| *v = 0.0);
        cosine_grad(&s, e.row(i), c, -w, &mut ds);
        for j in 0..k {
            dti[j] += dot(&ds, a.row(j));
            if ti[j] != 0.0 {
                axpy(ti[j], &ds, &mut da[j * d..(j + 1) * d]);
            }
        }
    }
    Objective {
        loss: 1.0 - cos_total + penalty_scale * l1,
        dt,
        da,
    }
}

/// Learns anchors and transform from the configured initialisation.
pub fn learn_anchors(teacher: &TeacherEmbedding, cfg: &DistillConfig) -> Result<DistillOutcome> {
    cfg.validate(teacher.num_words())?;
    let active = teacher.active_rows();
    if active.is_empty() {
        return Err(AdeError::data("teacher has no non-zero rows"));
    }
    let (anchors, transform) = initialise(teacher, cfg, &active)?;
    learn_anchors_from(teacher, cfg, anchors, transform)
}

/// Learns anchors and transform from an explicit starting point.
pub fn learn_anchors_from(
    teacher: &TeacherEmbedding,
    cfg: &DistillConfig,
    anchors: Tensor,
    transform: Tensor,
) -> Result<DistillOutcome> {
    cfg.validate(teacher.num_words())?;
    let (n, d, k) = (teacher.num_words(), teacher.dim(), cfg.num_anchors);
    if anchors.shape() != [k, d] || transform.shape() != [n, k] {
        return Err(AdeError::shape(format!(
            "initial anchors {:?} / transform {:?} do not match K={k}, N={n}, d={d}",
            anchors.shape(),
            transform.shape()
        )));
    }
    let active = teacher.active_rows();
    if active.is_empty() {
        return Err(AdeError::data("teacher has no non-zero rows"));
    }
    let weights = cfg.row_weights.clone().unwrap_or_else(|| vec![1.0; n]);
    if active.iter().all(|&i| weights[i] == 0.0) {
        return Err(AdeError::config("row weights are zero on every active row"));
    }
    let e = teacher.values();
    let (mut a, mut t) = (anchors, transform);
    let mut opt_t = Adam::new(t.len());
    let mut opt_a = Adam::new(a.len());
    let mut history = Vec::with_capacity(cfg.steps);
    let mut rng = substream(cfg.seed, 3);
    let batch = cfg.batch_size.unwrap_or(active.len()).min(active.len());
    let mut order = active.clone();
    let mut cursor = order.len();
    let mut in_batch = vec![false; n];

    for step in 0..cfg.steps {
        let rows: Vec<usize> = if batch == active.len() {
            active.clone()
        } else {
            if cursor + batch > order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            cursor += batch;
            order[cursor - batch..cursor].to_vec()
        };
        let obj = objective(e, &t, &a, &rows, &weights, cfg.sparsity);
        if !obj.loss.is_finite() {
            return Err(AdeError::Diverged { step, detail: format!("distillation loss {}", obj.loss) });
        }
        history.push(obj.loss);
        rows.iter().for_each(|&i| in_batch[i] = true);
        opt_t.step_masked(t.data_mut(), &obj.dt, cfg.learning_rate, |idx| in_batch[idx / k]);
        rows.iter().for_each(|&i| in_batch[i] = false);
        opt_a.step(a.data_mut(), &obj.da, cfg.learning_rate);
        project_rows(&mut t);
        if !a.is_finite() {
            return Err(AdeError::Diverged { step, detail: "anchor matrix became non-finite".into() });
        }
    }

    let anchors = AnchorMatrix::new(a)?;
    let recon = dense_reconstruction(&t, &anchors)?;
    let final_mean_cosine = mean_cosine(&recon, teacher)?;
    Ok(DistillOutcome {
        anchors,
        transform: t,
        history,
        final_loss: 1.0 - final_mean_cosine,
        final_mean_cosine,
    })
}

/// Distillation followed by vocabulary projection.
#[derive(Debug, Clone)]
pub struct DistilledCodebook {
    pub outcome: DistillOutcome,
    pub codebook: SparseCodebook,
    pub tau: f64,
    /// mean cosine of the thresholded (sparse) reconstruction
    pub sparse_mean_cosine: f64,
}

pub fn distill_codebook(teacher: &TeacherEmbedding, cfg: &DistillConfig, tau: f64) -> Result<DistilledCodebook> {
    let outcome = learn_anchors(teacher, cfg)?;
    let codebook = build_vp(&outcome.transform, tau)?;
    let sparse = sparse_reconstruction(&codebook, &outcome.anchors)?;
    let sparse_mean_cosine = mean_cosine(&sparse, teacher)?;
    Ok(DistilledCodebook { outcome, codebook, tau, sparse_mean_cosine })
}

/// Teacher `T₀·A₀` built from a sparse non-negative `T₀` (1 to 3 active
/// anchors per row) and Gaussian `A₀`, so zero loss is reachable.
pub fn realizable_teacher(num_words: usize, dim: usize, num_anchors: usize, seed: u64) -> Result<SyntheticTeacher> {
    synthetic_teacher(&SyntheticTeacherSpec {
        num_words,
        dim,
        clusters: num_anchors,
        max_active: 3,
        noise: 0.0,
        seed,
    })
}

/// Draws a random teacher row set for property tests: rows with unit norm.
pub fn random_unit_rows(rows: usize, dim: usize, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    let mut t = Tensor::new(vec![rows, dim], normal_vec(&mut rng, rows * dim, 1.0)).expect("shape");
    for i in 0..rows {
        let r = t.row_mut(i);
        let n = norm(r).max(f64::MIN_POSITIVE);
        r.iter_mut().for_each(|v| *v /= n);
    }
    t
}
