//! Recognition metrics over a labelled set.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::model::{GeoTrNet, GRAD_CHUNK};

/// Single-image forwards timed by [`evaluate`].
pub const DEFAULT_LATENCY_RUNS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    /// Fraction of samples with every slot correct.
    pub exact_match_accuracy: f64,
    /// Fraction of correct slots.
    pub per_char_accuracy: f64,
    /// Macro-averaged per-class precision over slot predictions.
    pub map: f64,
    /// Macro-averaged per-class recall over slot predictions.
    pub mdp: f64,
    pub mean_latency_ms: f64,
    /// `confusion[truth][predicted]` slot counts.
    pub confusion: Vec<Vec<u64>>,
}

/// Slot predictions for every sample, in dataset order.
pub fn predict_dataset(model: &GeoTrNet<f32>, data: &Dataset) -> Result<Vec<Vec<usize>>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let parts = idx
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let images: Vec<_> = chunk.iter().map(|&i| data.image(i)).collect();
            let refs: Vec<_> = images.iter().collect();
            let probs = model.forward_batch(&refs)?;
            Ok(probs.iter().map(|p| GeoTrNet::decide(p).labels).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Exact-match accuracy only.
pub fn exact_match(model: &GeoTrNet<f32>, data: &Dataset) -> Result<f64> {
    let preds = predict_dataset(model, data)?;
    let hits = preds.iter().enumerate().filter(|(i, p)| p.as_slice() == data.labels(*i)).count();
    Ok(hits as f64 / data.len().max(1) as f64)
}

/// Accuracy, macro precision/recall and confusion from predictions and truths.
pub fn score(predictions: &[Vec<usize>], truths: &[&[usize]], classes: usize) -> Result<EvalReport> {
    if predictions.len() != truths.len() {
        return Err(Error::dim(format!("{} predictions for {} samples", predictions.len(), truths.len())));
    }
    let mut confusion = vec![vec![0u64; classes]; classes];
    let mut exact = 0;
    let mut slots = 0;
    let mut correct = 0;
    for (p, t) in predictions.iter().zip(truths) {
        if p.len() != t.len() {
            return Err(Error::dim(format!("{} predicted slots for {} labels", p.len(), t.len())));
        }
        if p.as_slice() == *t {
            exact += 1;
        }
        for (&pi, &ti) in p.iter().zip(t.iter()) {
            if pi >= classes || ti >= classes {
                return Err(Error::Index(format!("class {} outside {classes}", pi.max(ti))));
            }
            confusion[ti][pi] += 1;
            slots += 1;
            correct += (pi == ti) as usize;
        }
    }
    let mut precision = 0.0;
    let mut recall = 0.0;
    for c in 0..classes {
        let tp = confusion[c][c] as f64;
        let truth: u64 = confusion[c].iter().sum();
        let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
        precision += match (predicted, truth) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => tp / predicted as f64,
        };
        recall += match (truth, predicted) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => tp / truth as f64,
        };
    }
    let n = predictions.len().max(1) as f64;
    Ok(EvalReport {
        samples: predictions.len(),
        exact_match_accuracy: exact as f64 / n,
        per_char_accuracy: correct as f64 / slots.max(1) as f64,
        map: precision / classes as f64,
        mdp: recall / classes as f64,
        mean_latency_ms: 0.0,
        confusion,
    })
}

/// Mean wall time of single-image forwards, after one untimed warm-up.
pub fn measure_latency_ms(model: &GeoTrNet<f32>, data: &Dataset, runs: usize) -> Result<f64> {
    if data.is_empty() || runs == 0 {
        return Ok(0.0);
    }
    let images: Vec<_> = (0..runs.min(data.len())).map(|i| data.image(i)).collect();
    model.forward(&images[0])?;
    let start = Instant::now();
    for r in 0..runs {
        std::hint::black_box(model.forward(&images[r % images.len()])?);
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / runs as f64)
}

pub fn evaluate_with(model: &GeoTrNet<f32>, data: &Dataset, latency_runs: usize) -> Result<EvalReport> {
    let preds = predict_dataset(model, data)?;
    let truths: Vec<&[usize]> = (0..data.len()).map(|i| data.labels(i)).collect();
    let mut report = score(&preds, &truths, model.config.classes)?;
    report.mean_latency_ms = measure_latency_ms(model, data, latency_runs)?;
    Ok(report)
}

pub fn evaluate(model: &GeoTrNet<f32>, data: &Dataset) -> Result<EvalReport> {
    evaluate_with(model, data, DEFAULT_LATENCY_RUNS)
}
