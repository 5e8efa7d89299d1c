//! End-to-end flow: encode, train, quantize, evaluate, price and select.
//!
//! All randomness derives from the configured seed. Sample `i` of a split
//! is encoded from its own ChaCha stream, so encodings do not depend on
//! sample order, subset size or thread count.

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, LabelSplit};
use crate::encoding::{normalize_pixels, poisson_encode, SpikeTrain};
use crate::error::{Error, Result};
use crate::evaluation::{EvalOutcome, Evaluator};
use crate::fixedpoint::ParamFormat;
use crate::io::idx::{split_paths, NUM_CLASSES};
use crate::io::{load_idx, Dataset};
use crate::metrics::{energy_estimate, memory_footprint, model_inventory, EnergyInput, OpCounts, OperandBits};
use crate::network::{NetworkModel, WeightMatrix};
use crate::quant::{apply_ptq, observe_ranges, train_itq, Groups, QuantConfig, RangeReport, Scheme};
use crate::selection::{reward, select_model, CandidateReport};
use crate::training::train;

pub const TRAIN_STREAM: u64 = 0;
pub const TEST_STREAM: u64 = 1 << 32;
const INIT_STREAM: u64 = u64::MAX;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn load_split(cfg: &ExperimentConfig, train: bool) -> Result<Dataset> {
    let (img, lbl) = split_paths(&cfg.data_dir, train);
    let mut ds = load_idx(img, lbl)?;
    ds.name = cfg.dataset_name();
    Ok(ds)
}

/// Encodes `ds[range]`, sample `i` from stream `base + i`.
pub fn encode_range(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    range: std::ops::Range<usize>,
    base: u64,
) -> Result<Vec<(SpikeTrain, u8)>> {
    if range.end > ds.len() {
        return Err(Error::InvalidParameter(format!(
            "{} samples requested from {} of size {}",
            range.end,
            ds.name,
            ds.len()
        )));
    }
    let encode = |i: usize| -> Result<(SpikeTrain, u8)> {
        let mut rng = stream_rng(cfg.seed, base + i as u64);
        let train = poisson_encode(&normalize_pixels(ds.image(i)), cfg.num_steps, cfg.rate_scale, &mut rng)?;
        Ok((train, ds.labels[i]))
    };
    let idx: Vec<usize> = range.collect();
    let jobs = cfg.jobs.max(1).min(idx.len().max(1));
    if jobs == 1 {
        return idx.into_iter().map(encode).collect();
    }
    let chunk = idx.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<_>>> = thread::scope(|s| {
        let handles: Vec<_> = idx
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(|&i| encode(i)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("encoder panicked")).collect()
    });
    let mut out = Vec::with_capacity(idx.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Encoded training, labelling and test sets.
#[derive(Debug, Clone)]
pub struct Workload {
    pub dataset: String,
    pub num_inputs: usize,
    pub train: Vec<SpikeTrain>,
    pub label: Vec<(SpikeTrain, u8)>,
    pub test: Vec<(SpikeTrain, u8)>,
}

impl Workload {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        let train_ds = load_split(cfg, true)?;
        let test_ds = load_split(cfg, false)?;
        Self::from_datasets(cfg, &train_ds, &test_ds)
    }

    pub fn from_datasets(cfg: &ExperimentConfig, train_ds: &Dataset, test_ds: &Dataset) -> Result<Self> {
        if train_ds.pixels() != test_ds.pixels() {
            return Err(Error::DimensionMismatch {
                context: "train vs test image size",
                expected: train_ds.pixels(),
                found: test_ds.pixels(),
            });
        }
        let n = cfg.train_samples;
        let train_enc = encode_range(cfg, train_ds, 0..n, TRAIN_STREAM)?;
        let label = match cfg.label_split {
            LabelSplit::Train => {
                let k = cfg.label_count();
                if k <= n {
                    train_enc[..k].to_vec()
                } else {
                    encode_range(cfg, train_ds, 0..k, TRAIN_STREAM)?
                }
            }
            LabelSplit::Heldout => encode_range(cfg, train_ds, n..n + cfg.label_count(), TRAIN_STREAM)?,
        };
        let test = encode_range(cfg, test_ds, 0..cfg.test_samples, TEST_STREAM)?;
        Ok(Self {
            dataset: cfg.dataset_name(),
            num_inputs: train_ds.pixels(),
            train: train_enc.into_iter().map(|(t, _)| t).collect(),
            label,
            test,
        })
    }

    pub fn evaluator(&self, jobs: usize) -> Evaluator {
        Evaluator {
            label_set: self.label.clone(),
            test_set: self.test.clone(),
            num_classes: NUM_CLASSES,
            jobs,
        }
    }

    /// The training stream over all epochs.
    pub fn stream(&self, epochs: usize) -> impl Iterator<Item = &SpikeTrain> {
        (0..epochs).flat_map(move |_| self.train.iter())
    }
}

/// Untrained model with seeded uniform initial weights.
pub fn initial_model(cfg: &ExperimentConfig, num_inputs: usize) -> Result<NetworkModel> {
    let mut rng = stream_rng(cfg.seed, INIT_STREAM);
    let w = WeightMatrix::random(num_inputs, cfg.num_excitatory, cfg.init_w_max, &mut rng);
    let mut m = NetworkModel::with_weights(w, cfg.w_max, cfg.layer_params())?;
    m.lineage = lineage(cfg, "fp32");
    Ok(m)
}

fn lineage(cfg: &ExperimentConfig, what: &str) -> String {
    format!(
        "{what} seed={} train_samples={} epochs={} num_steps={} rate_scale={}",
        cfg.seed, cfg.train_samples, cfg.epochs, cfg.num_steps, cfg.rate_scale
    )
}

/// Trains the fp32 model; returns it with the training op counts.
pub fn train_fp32(cfg: &ExperimentConfig, work: &Workload) -> Result<(NetworkModel, OpCounts)> {
    let mut model = initial_model(cfg, work.num_inputs)?;
    let mut ops = OpCounts::default();
    train(&mut model, work.stream(cfg.epochs), &cfg.learn_config(), cfg.rule(), None, &mut ops)?;
    Ok((model, ops))
}

/// Seed of the requantizer random stream for a configuration.
fn quant_seed(cfg: &ExperimentConfig, q: &QuantConfig) -> u64 {
    let mut h = cfg.seed ^ 0x9e37_79b9_7f4a_7c15;
    for part in [
        q.scheme.to_string(),
        q.rounding.as_str().to_string(),
        q.tags().weights.to_string(),
        q.tags().v_mem.to_string(),
        q.tags().v_thresh.to_string(),
    ] {
        for b in part.bytes().chain(std::iter::once(b'|')) {
            h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Produces the quantized model of `q`: PTQ of `fp32`, or ITQ training
/// from the initial weights. Returns the model and its training ops (the
/// fp32 training ops for PTQ).
pub fn quantize(
    cfg: &ExperimentConfig,
    work: &Workload,
    fp32: &NetworkModel,
    fp32_train_ops: &OpCounts,
    q: &QuantConfig,
) -> Result<(NetworkModel, OpCounts)> {
    let seed = quant_seed(cfg, q);
    let (mut model, ops) = match q.scheme {
        Scheme::Ptq => (apply_ptq(fp32, q, seed)?, *fp32_train_ops),
        Scheme::Itq => {
            let init = initial_model(cfg, work.num_inputs)?;
            let mut ops = OpCounts::default();
            let m = train_itq(&init, work.stream(cfg.epochs), &cfg.learn_config(), q, seed, &mut ops)?;
            (m, ops)
        }
    };
    model.lineage = format!(
        "{} {} {} w={} vmem={} vth={}",
        lineage(cfg, "quantized"),
        q.scheme,
        q.rounding.as_str(),
        q.tags().weights,
        q.tags().v_mem,
        q.tags().v_thresh
    );
    Ok((model, ops))
}

/// Energy of a training run at the model's operand widths. PTQ models
/// were trained in fp32.
pub fn training_energy(cfg: &ExperimentConfig, q: &QuantConfig, ops: &OpCounts) -> Result<f64> {
    let bits = match q.scheme {
        Scheme::Ptq => OperandBits::FP32,
        Scheme::Itq => OperandBits::of(&q.tags()),
    };
    energy_estimate(EnergyInput::Ops(ops, bits), &cfg.energy_model())
}

/// The sweep grid in deterministic order: scheme, rounding, bitwidth,
/// group set. Each format takes its integer bits from `ranges`.
pub fn sweep_grid(cfg: &ExperimentConfig, ranges: &RangeReport) -> Result<Vec<QuantConfig>> {
    let mut out = Vec::new();
    for &scheme in &cfg.schemes {
        for &rounding in &cfg.roundings {
            for &bits in &cfg.bitwidths {
                for &groups in &cfg.group_sets {
                    let w = ParamFormat::Fixed(ranges.weights.format_for_width(bits)?);
                    let (v_mem, v_thresh) = match groups {
                        Groups::QW => (ParamFormat::Fp32, ParamFormat::Fp32),
                        Groups::QWN => (
                            ParamFormat::Fixed(ranges.v_mem.format_for_width(bits)?),
                            ParamFormat::Fixed(ranges.v_thresh.format_for_width(bits)?),
                        ),
                    };
                    out.push(QuantConfig {
                        scheme,
                        rounding,
                        groups,
                        weights: w,
                        v_mem,
                        v_thresh,
                    });
                }
            }
        }
    }
    Ok(out)
}

type Key = (String, String, String, String, String, String);

fn key_of(dataset: &str, q: &QuantConfig) -> Key {
    let t = q.tags();
    (
        dataset.to_string(),
        q.scheme.to_string(),
        q.rounding.as_str().to_string(),
        t.weights.to_string(),
        t.v_mem.to_string(),
        t.v_thresh.to_string(),
    )
}

/// Inputs shared by every sweep candidate.
pub struct SweepContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub work: &'a Workload,
    pub fp32: &'a NetworkModel,
    pub fp32_train_ops: OpCounts,
}

impl SweepContext<'_> {
    /// Builds, evaluates and prices one candidate.
    pub fn candidate(&self, q: &QuantConfig) -> Result<CandidateReport> {
        let (mut model, train_ops) = quantize(self.cfg, self.work, self.fp32, &self.fp32_train_ops, q)?;
        let outcome: EvalOutcome = self.work.evaluator(1).evaluate(&mut model)?;
        let mem_bits = memory_footprint(&model_inventory(&model));
        let mem_ref_bits = memory_footprint(&model_inventory(self.fp32));
        let mu = self.cfg.mu.first().copied().unwrap_or(0.0);
        let energy_infer = energy_estimate(
            EnergyInput::Ops(&outcome.test_ops, OperandBits::of(&model.formats)),
            &self.cfg.energy_model(),
        )?;
        Ok(CandidateReport {
            dataset: self.work.dataset.clone(),
            config: *q,
            acc_q: outcome.accuracy,
            mem_bits,
            mem_ref_bits,
            energy_train: training_energy(self.cfg, q, &train_ops)?,
            energy_infer,
            mu,
            reward: reward(outcome.accuracy, mem_bits, mem_ref_bits, mu)?,
            selected: false,
        })
    }

    /// Runs every grid entry missing from `existing` on up to `jobs`
    /// threads. Rows come back in grid order (existing rows first for
    /// entries outside the grid), independent of scheduling.
    pub fn run(&self, grid: &[QuantConfig], existing: Vec<CandidateReport>, jobs: usize) -> Result<Vec<CandidateReport>> {
        let done: HashSet<Key> = existing.iter().map(|c| key_of(&c.dataset, &c.config)).collect();
        let todo: Vec<usize> = (0..grid.len())
            .filter(|&i| !done.contains(&key_of(&self.work.dataset, &grid[i])))
            .collect();
        info!("sweep: {} candidates, {} already in report", grid.len(), grid.len() - todo.len());
        let results: Mutex<Vec<Option<Result<CandidateReport>>>> = Mutex::new((0..todo.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = jobs.max(1).min(todo.len().max(1));
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let k = next.fetch_add(1, Ordering::SeqCst);
                    if k >= todo.len() {
                        break;
                    }
                    let q = &grid[todo[k]];
                    let r = self.candidate(q);
                    if let Ok(c) = &r {
                        debug!(
                            "{} {} w={} vmem={} vth={} acc={:.4} mem={}",
                            q.scheme,
                            q.rounding.as_str(),
                            c.config.tags().weights,
                            c.config.tags().v_mem,
                            c.config.tags().v_thresh,
                            c.acc_q,
                            c.mem_bits
                        );
                    }
                    results.lock().unwrap()[k] = Some(r);
                });
            }
        });
        let mut fresh = results.into_inner().unwrap().into_iter();
        let mut by_key: std::collections::HashMap<Key, CandidateReport> =
            existing.into_iter().map(|c| (key_of(&c.dataset, &c.config), c)).collect();
        let mut out = Vec::with_capacity(grid.len());
        let mut todo_iter = todo.iter().peekable();
        for (i, q) in grid.iter().enumerate() {
            if todo_iter.peek() == Some(&&i) {
                todo_iter.next();
                out.push(fresh.next().flatten().expect("every candidate ran")?);
            } else if let Some(c) = by_key.remove(&key_of(&self.work.dataset, q)) {
                out.push(c);
            }
        }
        let mut rest: Vec<CandidateReport> = by_key.into_values().collect();
        rest.sort_by_key(|c| key_of(&c.dataset, &c.config));
        rest.extend(out);
        Ok(rest)
    }
}

/// Observes ranges on the first `calibration_samples` training samples.
pub fn calibrate(cfg: &ExperimentConfig, work: &Workload, model: &NetworkModel) -> Result<RangeReport> {
    let n = cfg.calibration_samples.min(work.train.len());
    observe_ranges(model, &work.train[..n])
}

/// Rescores every row at `mu`, marks the selected one and returns its
/// index.
pub fn mark_selection(
    rows: &mut [CandidateReport],
    mu: f64,
    mem_budget: Option<u64>,
    energy_budget: Option<f64>,
) -> Result<usize> {
    for r in rows.iter_mut() {
        r.rescore(mu)?;
        r.selected = false;
    }
    let i = select_model(rows, mu, mem_budget, energy_budget)?;
    rows[i].selected = true;
    Ok(i)
}
