//! Neuron labelling and spike-count classification.

use std::thread;

use crate::encoding::SpikeTrain;
use crate::error::{Error, Result};
use crate::metrics::OpCounts;
use crate::network::NetworkModel;

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronLabelMap {
    pub labels: Vec<u8>,
    /// Neurons that never fired during labelling; they do not vote.
    pub silent: Vec<bool>,
    /// Mean spike count per neuron per class, `[neuron][class]`.
    pub responses: Vec<Vec<f64>>,
    pub num_classes: usize,
}

impl NeuronLabelMap {
    /// A map with explicit labels and no silent neurons.
    pub fn from_labels(labels: Vec<u8>, num_classes: usize) -> Self {
        let n = labels.len();
        Self {
            labels,
            silent: vec![false; n],
            responses: vec![vec![0.0; num_classes]; n],
            num_classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub class: u8,
    /// No voting neuron fired; `class` is the tie-break default.
    pub no_response: bool,
}

/// Presents every train with plasticity off and returns per-sample
/// per-neuron spike counts. With `jobs > 1` contiguous chunks run on model
/// clones; the result does not depend on `jobs`.
pub fn collect_spike_counts(
    model: &mut NetworkModel,
    trains: &[&SpikeTrain],
    jobs: usize,
    counter: &mut OpCounts,
) -> Result<Vec<Vec<u32>>> {
    let jobs = jobs.max(1).min(trains.len().max(1));
    if jobs == 1 {
        let out = trains
            .iter()
            .map(|t| model.present_sample(t, None, counter))
            .collect::<Result<Vec<_>>>();
        model.reset_dynamic_state();
        return out;
    }
    let chunk = trains.len().div_ceil(jobs);
    let template: &NetworkModel = model;
    let results: Vec<Result<(Vec<Vec<u32>>, OpCounts)>> = thread::scope(|s| {
        let handles: Vec<_> = trains
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    let mut local = template.clone();
                    let mut ops = OpCounts::default();
                    let counts = part
                        .iter()
                        .map(|t| local.present_sample(t, None, &mut ops))
                        .collect::<Result<Vec<_>>>()?;
                    Ok((counts, ops))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(trains.len());
    for r in results {
        let (counts, ops) = r?;
        out.extend(counts);
        *counter += ops;
    }
    Ok(out)
}

/// Labels each neuron with the class that maximizes its mean response.
pub fn labels_from_counts(counts: &[Vec<u32>], classes: &[u8], num_classes: usize) -> Result<NeuronLabelMap> {
    if counts.len() != classes.len() {
        return Err(Error::DimensionMismatch {
            context: "labelling counts vs classes",
            expected: classes.len(),
            found: counts.len(),
        });
    }
    let n = counts.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; num_classes]; n];
    let mut per_class = vec![0usize; num_classes];
    for (c, &class) in counts.iter().zip(classes) {
        let class = usize::from(class);
        if class >= num_classes {
            return Err(Error::InvalidParameter(format!("class {class} >= {num_classes}")));
        }
        if c.len() != n {
            return Err(Error::DimensionMismatch {
                context: "labelling count vector",
                expected: n,
                found: c.len(),
            });
        }
        per_class[class] += 1;
        for (j, &k) in c.iter().enumerate() {
            sums[j][class] += f64::from(k);
        }
    }
    if let Some(class) = per_class.iter().position(|&k| k == 0) {
        return Err(Error::EmptyClass { class: class as u8 });
    }
    let mut labels = Vec::with_capacity(n);
    let mut silent = Vec::with_capacity(n);
    for row in &mut sums {
        for (v, &k) in row.iter_mut().zip(&per_class) {
            *v /= k as f64;
        }
        let (best, &max) = row
            .iter()
            .enumerate()
            .fold((0, &row[0]), |acc, (c, v)| if *v > *acc.1 { (c, v) } else { acc });
        labels.push(best as u8);
        silent.push(max == 0.0);
    }
    Ok(NeuronLabelMap {
        labels,
        silent,
        responses: sums,
        num_classes,
    })
}

/// Presents the labelled samples (plasticity off) and assigns labels.
pub fn assign_neuron_labels(
    model: &mut NetworkModel,
    samples: &[(SpikeTrain, u8)],
    num_classes: usize,
    jobs: usize,
    counter: &mut OpCounts,
) -> Result<NeuronLabelMap> {
    if samples.is_empty() {
        return Err(Error::Empty("labelling set"));
    }
    let trains: Vec<&SpikeTrain> = samples.iter().map(|(t, _)| t).collect();
    let classes: Vec<u8> = samples.iter().map(|(_, c)| *c).collect();
    let counts = collect_spike_counts(model, &trains, jobs, counter)?;
    labels_from_counts(&counts, &classes, num_classes)
}

/// Predicts the class whose voting neurons have the highest mean count.
pub fn classify_sample(labels: &NeuronLabelMap, spike_counts: &[u32]) -> Result<Prediction> {
    if spike_counts.len() != labels.labels.len() {
        return Err(Error::DimensionMismatch {
            context: "classify_sample counts",
            expected: labels.labels.len(),
            found: spike_counts.len(),
        });
    }
    let mut sums = vec![0.0; labels.num_classes];
    let mut members = vec![0usize; labels.num_classes];
    for ((&label, &silent), &k) in labels.labels.iter().zip(&labels.silent).zip(spike_counts) {
        if silent {
            continue;
        }
        sums[usize::from(label)] += f64::from(k);
        members[usize::from(label)] += 1;
    }
    let mut best: Option<(usize, f64)> = None;
    for c in 0..labels.num_classes {
        if members[c] == 0 {
            continue;
        }
        let mean = sums[c] / members[c] as f64;
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((c, mean));
        }
    }
    Ok(match best {
        Some((c, mean)) => Prediction {
            class: c as u8,
            no_response: mean == 0.0,
        },
        None => Prediction {
            class: 0,
            no_response: true,
        },
    })
}

/// Fraction of precomputed count vectors classified as their class.
pub fn accuracy_from_counts(labels: &NeuronLabelMap, counts: &[Vec<u32>], classes: &[u8]) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut correct = 0usize;
    for (c, &class) in counts.iter().zip(classes) {
        if classify_sample(labels, c)?.class == class {
            correct += 1;
        }
    }
    Ok(correct as f64 / counts.len() as f64)
}

pub fn evaluate_accuracy(
    model: &mut NetworkModel,
    labels: &NeuronLabelMap,
    test_set: &[(SpikeTrain, u8)],
    jobs: usize,
    counter: &mut OpCounts,
) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let trains: Vec<&SpikeTrain> = test_set.iter().map(|(t, _)| t).collect();
    let classes: Vec<u8> = test_set.iter().map(|(_, c)| *c).collect();
    let counts = collect_spike_counts(model, &trains, jobs, counter)?;
    accuracy_from_counts(labels, &counts, &classes)
}

/// Labelling and test sets bound together: each evaluated model gets its
/// own neuron labels from the labelling set before being scored.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub label_set: Vec<(SpikeTrain, u8)>,
    pub test_set: Vec<(SpikeTrain, u8)>,
    pub num_classes: usize,
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub accuracy: f64,
    pub labels: NeuronLabelMap,
    pub label_ops: OpCounts,
    /// Inference work over the test set.
    pub test_ops: OpCounts,
}

impl Evaluator {
    pub fn evaluate(&self, model: &mut NetworkModel) -> Result<EvalOutcome> {
        let mut label_ops = OpCounts::default();
        let labels = assign_neuron_labels(model, &self.label_set, self.num_classes, self.jobs, &mut label_ops)?;
        let mut test_ops = OpCounts::default();
        let accuracy = evaluate_accuracy(model, &labels, &self.test_set, self.jobs, &mut test_ops)?;
        Ok(EvalOutcome {
            accuracy,
            labels,
            label_ops,
            test_ops,
        })
    }
}
