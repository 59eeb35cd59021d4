//! Minibatch training of [`DeepOperatorModel`] on a kernel dataset.

use ndarray::{Array2, ArrayView2};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::deeponet::{relative_l2, triangle_points, trunk_input, DeepOperatorModel};
use super::mlp::Dense;
use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Fraction of the dataset used for training.
    pub split: f64,
    /// Triangle nodes drawn per step; `None` uses every node.
    pub points_per_step: Option<usize>,
    /// Learning rate at the last epoch as a fraction of `learning_rate`;
    /// the rate decays geometrically in between. `1.0` keeps it constant.
    pub final_lr_fraction: f64,
    /// Curves are evaluated every `eval_every` epochs and at the last epoch.
    pub eval_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            batch_size: 16,
            epochs: 1000,
            seed: 0,
            optimizer: Optimizer::Adam,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            split: 0.8,
            points_per_step: Some(256),
            final_lr_fraction: 0.01,
            eval_every: 10,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning rate must be positive"));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(invalid("split must lie in (0, 1)"));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(invalid("batch_size and eval_every must be positive"));
        }
        if self.points_per_step == Some(0) {
            return Err(invalid("points_per_step must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return Err(invalid("adam needs betas in [0, 1) and eps > 0"));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(invalid("final_lr_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.learning_rate;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        self.learning_rate * self.final_lr_fraction.powf(t)
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch MSE over the epoch.
    pub train_loss: f64,
    /// Mean per-sample relative L2 error; `None` on epochs without evaluation.
    pub train_rel_l2: Option<f64>,
    pub test_rel_l2: Option<f64>,
}

/// Adam / SGD state; one moment pair per layer, branch layers first.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Dense>,
    pub v: Vec<Dense>,
}

impl OptimizerState {
    pub fn new(model: &DeepOperatorModel) -> Self {
        let zeros: Vec<Dense> = model
            .layers()
            .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
            .collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// Everything needed to continue a run: model, optimizer moments and curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub model: DeepOperatorModel,
    pub config: TrainingConfig,
    pub optimizer: OptimizerState,
    pub epochs_done: usize,
    pub curve: Vec<EpochRecord>,
}

/// Dataset in matrix form: branch inputs, targets and the split.
pub struct PreparedData {
    branch_in: Array2<f64>,
    targets: Array2<f64>,
    trunk_in: Array2<f64>,
    y: Vec<f64>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl PreparedData {
    pub fn new(model: &DeepOperatorModel, dataset: &Dataset, split: f64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(invalid("empty dataset"));
        }
        let grid = dataset.grid();
        let lambdas: Vec<_> = dataset.samples.iter().map(|s| &s.lambda).collect();
        let branch_in = model.branch_batch(&lambdas);
        let t = grid.triangle_len();
        let mut targets = Array2::zeros((dataset.len(), t));
        for (mut row, s) in targets.outer_iter_mut().zip(&dataset.samples) {
            grid.check_same(&s.kernel.grid())?;
            row.assign(&ndarray::ArrayView1::from(s.kernel.values()));
        }
        let pts = triangle_points(grid);
        let (train, test) = if dataset.len() == 1 {
            (vec![0], vec![])
        } else {
            dataset.split_indices(split)
        };
        Ok(Self {
            branch_in,
            targets,
            trunk_in: trunk_input(&pts),
            y: pts.iter().map(|p| p.1).collect(),
            train,
            test,
        })
    }

    /// Mean per-sample relative L2 error of `model` on the samples `idx`.
    pub fn mean_relative_l2(&self, model: &DeepOperatorModel, idx: &[usize]) -> Option<f64> {
        if idx.is_empty() {
            return None;
        }
        let mut basis = model.trunk.forward(self.trunk_in.view());
        for (mut row, &y) in basis.outer_iter_mut().zip(&self.y) {
            row *= y;
        }
        let b_in = self.branch_in.select(ndarray::Axis(0), idx);
        let pred = model.branch.forward(b_in.view()).dot(&basis.t());
        let total: f64 = idx
            .iter()
            .zip(pred.outer_iter())
            .map(|(&i, p)| {
                relative_l2(
                    p.as_slice().expect("row-major"),
                    self.targets.row(i).as_slice().expect("row-major"),
                )
            })
            .sum();
        Some(total / idx.len() as f64)
    }
}

impl TrainerState {
    pub fn new(model: DeepOperatorModel, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            optimizer: OptimizerState::new(&model),
            model,
            config,
            epochs_done: 0,
            curve: Vec::new(),
        })
    }

    fn apply_gradients(&mut self, grads: &[Dense], lr: f64) {
        let cfg = &self.config;
        self.optimizer.step += 1;
        let t = self.optimizer.step as i32;
        let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.adam_eps);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let opt = cfg.optimizer;
        let state = &mut self.optimizer;
        for (((layer, g), m), v) in self
            .model
            .layers_mut()
            .zip(grads)
            .zip(state.m.iter_mut())
            .zip(state.v.iter_mut())
        {
            match opt {
                Optimizer::Sgd => {
                    layer.w.scaled_add(-lr, &g.w);
                    layer.b.scaled_add(-lr, &g.b);
                }
                Optimizer::Adam => {
                    let upd = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    };
                    ndarray::Zip::from(&mut layer.w)
                        .and(&g.w)
                        .and(&mut m.w)
                        .and(&mut v.w)
                        .for_each(|p, &g, m, v| upd(p, g, m, v));
                    ndarray::Zip::from(&mut layer.b)
                        .and(&g.b)
                        .and(&mut m.b)
                        .and(&mut v.b)
                        .for_each(|p, &g, m, v| upd(p, g, m, v));
                }
            }
        }
    }

    /// One epoch over the training split.
    fn run_epoch(&mut self, data: &PreparedData) -> Result<f64> {
        let epoch = self.epochs_done;
        let cfg = self.config.clone();
        let lr = cfg.learning_rate_at(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64));
        let mut order = data.train.clone();
        order.shuffle(&mut rng);
        let n_pts = data.y.len();
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let b_in = data.branch_in.select(ndarray::Axis(0), batch);
            let (t_in, y, tgt) = match cfg.points_per_step {
                Some(p) if p < n_pts => {
                    let mut pts = index::sample(&mut rng, n_pts, p).into_vec();
                    pts.sort_unstable();
                    let t_in = data.trunk_in.select(ndarray::Axis(0), &pts);
                    let y: Vec<f64> = pts.iter().map(|&i| data.y[i]).collect();
                    let tgt = Array2::from_shape_fn((batch.len(), p), |(r, c)| {
                        data.targets[[batch[r], pts[c]]]
                    });
                    (t_in, y, tgt)
                }
                _ => (
                    data.trunk_in.clone(),
                    data.y.clone(),
                    data.targets.select(ndarray::Axis(0), batch),
                ),
            };
            let (loss, grads) = self.loss_and_grads(b_in.view(), t_in.view(), &y, tgt.view());
            if !loss.is_finite() {
                return Err(Error::TrainingDivergence { epoch });
            }
            self.apply_gradients(&grads, lr);
            loss_sum += loss;
            batches += 1;
        }
        if self.model.layers().any(|l| l.w.iter().chain(&l.b).any(|v| !v.is_finite())) {
            return Err(Error::TrainingDivergence { epoch });
        }
        Ok(loss_sum / batches as f64)
    }

    fn loss_and_grads(
        &self,
        b_in: ArrayView2<f64>,
        t_in: ArrayView2<f64>,
        y: &[f64],
        tgt: ArrayView2<f64>,
    ) -> (f64, Vec<Dense>) {
        let mut bg = self.model.branch.zero_grads();
        let mut tg = self.model.trunk.zero_grads();
        let loss = self.model.loss_and_grads(b_in, t_in, y, tgt, &mut bg, &mut tg);
        bg.extend(tg);
        (loss, bg)
    }

    /// Continue training until `config.epochs` epochs are done in total.
    pub fn run(&mut self, data: &PreparedData) -> Result<()> {
        self.run_until(data, self.config.epochs)
    }

    /// Continue training until `target` epochs are done in total.
    pub fn run_until(&mut self, data: &PreparedData, target: usize) -> Result<()> {
        while self.epochs_done < target.min(self.config.epochs) {
            let train_loss = self.run_epoch(data)?;
            let epoch = self.epochs_done;
            self.epochs_done += 1;
            let eval = epoch.is_multiple_of(self.config.eval_every) || self.epochs_done == self.config.epochs;
            let (train_rel_l2, test_rel_l2) = if eval {
                (
                    data.mean_relative_l2(&self.model, &data.train),
                    data.mean_relative_l2(&self.model, &data.test),
                )
            } else {
                (None, None)
            };
            self.curve.push(EpochRecord {
                epoch,
                train_loss,
                train_rel_l2,
                test_rel_l2,
            });
        }
        Ok(())
    }
}

/// Result of a finished [`train`] call.
#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub state: TrainerState,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl TrainingReport {
    pub fn model(&self) -> &DeepOperatorModel {
        &self.state.model
    }

    pub fn curve(&self) -> &[EpochRecord] {
        &self.state.curve
    }

    pub fn final_train_rel_l2(&self) -> Option<f64> {
        self.state.curve.last().and_then(|r| r.train_rel_l2)
    }

    pub fn final_test_rel_l2(&self) -> Option<f64> {
        self.state.curve.last().and_then(|r| r.test_rel_l2)
    }
}

pub fn train(model: DeepOperatorModel, dataset: &Dataset, config: &TrainingConfig) -> Result<TrainingReport> {
    let data = PreparedData::new(&model, dataset, config.split)?;
    let mut state = TrainerState::new(model, config.clone())?;
    state.run(&data)?;
    Ok(TrainingReport {
        state,
        train_indices: data.train,
        test_indices: data.test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_dataset, LambdaFamilySpec};
    use crate::kernel::GoursatSolveOptions;
    use crate::operator::{Activation, OperatorArchitecture};

    fn arch() -> OperatorArchitecture {
        OperatorArchitecture {
            sensors: 21,
            branch_hidden: vec![24],
            trunk_hidden: vec![24, 24],
            basis: 12,
            activation: Activation::Tanh,
        }
    }

    fn dataset(n: usize) -> Dataset {
        let solver = GoursatSolveOptions {
            n_points: 21,
            ..Default::default()
        };
        build_dataset(&LambdaFamilySpec::observer(), n, &solver, 0.8, 1).unwrap()
    }

    fn config(epochs: usize) -> TrainingConfig {
        TrainingConfig {
            epochs,
            batch_size: 4,
            points_per_step: Some(64),
            eval_every: 1,
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn overfits_single_sample() {
        let ds = dataset(1);
        let wide = OperatorArchitecture {
            trunk_hidden: vec![40, 40],
            basis: 20,
            ..arch()
        };
        let model = DeepOperatorModel::new(wide, 0.05, 1).unwrap();
        let cfg = TrainingConfig {
            points_per_step: None,
            learning_rate: 1e-2,
            final_lr_fraction: 0.05,
            ..config(4000)
        };
        let r = train(model, &ds, &cfg).unwrap();
        assert!(r.final_train_rel_l2().unwrap() <= 1e-2, "{:?}", r.final_train_rel_l2());
        assert!(r.final_test_rel_l2().is_none());
    }

    #[test]
    fn loss_decreases_and_stays_finite() {
        let ds = dataset(20);
        let model = DeepOperatorModel::new(arch(), 0.05, 2).unwrap();
        let r = train(model, &ds, &config(30)).unwrap();
        let c = r.curve();
        assert_eq!(c.len(), 30);
        assert!(c.iter().all(|e| e.train_loss.is_finite()));
        assert!(c.last().unwrap().train_loss <= c[0].train_loss);
        assert_eq!(r.train_indices.len() + r.test_indices.len(), 20);
    }

    #[test]
    fn reported_train_error_matches_predictions() {
        let ds = dataset(10);
        let model = DeepOperatorModel::new(arch(), 0.05, 4).unwrap();
        let r = train(model, &ds, &config(5)).unwrap();
        let mean: f64 = r
            .train_indices
            .iter()
            .map(|&i| {
                let s = &ds.samples[i];
                let k = r.model().predict_kernel(&s.lambda, 21).unwrap();
                relative_l2(k.values(), s.kernel.values())
            })
            .sum::<f64>()
            / r.train_indices.len() as f64;
        assert!((mean - r.final_train_rel_l2().unwrap()).abs() <= 1e-12 * mean);
    }

    #[test]
    fn reproducible_and_resumable() {
        let ds = dataset(12);
        let model = DeepOperatorModel::new(arch(), 0.05, 3).unwrap();
        let a = train(model.clone(), &ds, &config(6)).unwrap();
        let b = train(model.clone(), &ds, &config(6)).unwrap();
        assert_eq!(a.state, b.state);

        let data = PreparedData::new(&model, &ds, 0.8).unwrap();
        let mut split = TrainerState::new(model, config(6)).unwrap();
        split.run_until(&data, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        crate::operator::save_trainer(&split, dir.path()).unwrap();
        let mut resumed = crate::operator::load_trainer(dir.path()).unwrap();
        resumed.run(&data).unwrap();
        assert_eq!(resumed.model, a.state.model);
        assert_eq!(resumed.curve, a.state.curve);
    }

    #[test]
    fn divergence_names_epoch() {
        let ds = dataset(6);
        let model = DeepOperatorModel::new(arch(), 0.05, 5).unwrap();
        let cfg = TrainingConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 1e6,
            ..config(5)
        };
        match train(model, &ds, &cfg) {
            Err(Error::TrainingDivergence { epoch }) => assert!(epoch < 5),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig { split: 1.0, ..Default::default() }.validate().is_err());
        assert!(serde_json::from_str::<TrainingConfig>(r#"{"lr": 1}"#).is_err());
        let c: TrainingConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.batch_size, TrainingConfig::default().batch_size);
    }
}
