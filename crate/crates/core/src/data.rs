//! Shared data-model traits: labeled samples, populations with a known
//! conditional probability, and binary classifiers.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// A feature vector in `[0,1]^d` with a label in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: i8,
}

impl LabeledSample {
    pub fn y_f64(&self) -> f64 {
        self.y as f64
    }
}

/// The Bayes rule: `+1` iff the conditional probability is at least `1/2`
/// (ties go to `+1`).
pub fn bayes_classify(eta: f64) -> i8 {
    if eta >= 0.5 {
        1
    } else {
        -1
    }
}

/// A population with known conditional probability `eta` and a sampling
/// marginal. Implementations are immutable after construction; sampling with
/// distinct seeds is safe concurrently.
pub trait Instance {
    /// Ambient feature dimension.
    fn dim(&self) -> usize;

    /// Conditional probability `P(Y = 1 | X = x)`.
    fn eta(&self, x: &[f64]) -> Result<f64>;

    /// Draws one feature vector from the instance marginal.
    fn sample_x(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Draws an iid labeled dataset, deterministic per seed.
    fn sample(&self, n: usize, seed: u64) -> Result<Vec<LabeledSample>> {
        if n == 0 {
            return Err(invalid("dataset size must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let x = self.sample_x(&mut rng);
            let p = self.eta(&x)?;
            let y = if rand::Rng::gen::<f64>(&mut rng) < p { 1 } else { -1 };
            out.push(LabeledSample { x, y });
        }
        Ok(out)
    }
}

/// A hard binary classifier on feature vectors.
pub trait Classifier {
    /// Returns the predicted label, `+1` or `-1`.
    fn decide(&self, x: &[f64]) -> Result<i8>;
}

impl<F: Fn(&[f64]) -> i8> Classifier for F {
    fn decide(&self, x: &[f64]) -> Result<i8> {
        Ok(self(x))
    }
}

/// The Bayes classifier of an instance.
pub struct BayesClassifier<'a, I: Instance + ?Sized>(pub &'a I);

impl<I: Instance + ?Sized> Classifier for BayesClassifier<'_, I> {
    fn decide(&self, x: &[f64]) -> Result<i8> {
        Ok(bayes_classify(self.0.eta(x)?))
    }
}

/// Writes a dataset as CSV with columns `x1..xd,y`.
pub fn dataset_to_csv(data: &[LabeledSample]) -> String {
    let d = data.first().map_or(0, |s| s.x.len());
    let mut out = String::new();
    for j in 1..=d {
        out.push_str(&format!("x{j},"));
    }
    out.push_str("y\n");
    for s in data {
        for v in &s.x {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{}\n", s.y));
    }
    out
}

/// Parses a dataset from the CSV format written by [`dataset_to_csv`].
pub fn dataset_from_csv(text: &str) -> Result<Vec<LabeledSample>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| invalid("empty dataset file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.last() != Some(&"y") || cols.len() < 2 {
        return Err(invalid("dataset header must be x1..xd,y"));
    }
    let d = cols.len() - 1;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != d + 1 {
            return Err(invalid(format!("row {} has {} fields, expected {}", i + 2, parts.len(), d + 1)));
        }
        let x = parts[..d]
            .iter()
            .map(|p| p.parse::<f64>().map_err(|e| invalid(format!("row {}: {e}", i + 2))))
            .collect::<Result<Vec<f64>>>()?;
        let y: i8 = parts[d]
            .parse()
            .map_err(|e| invalid(format!("row {}: bad label: {e}", i + 2)))?;
        if y != 1 && y != -1 {
            return Err(invalid(format!("row {}: label must be -1 or 1", i + 2)));
        }
        out.push(LabeledSample { x, y });
    }
    if out.is_empty() {
        return Err(invalid("dataset has no rows"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bayes_tie_goes_positive() {
        assert_eq!(bayes_classify(0.5), 1);
        assert_eq!(bayes_classify(0.49), -1);
        assert_eq!(bayes_classify(1.0), 1);
    }

    #[test]
    fn csv_round_trip() {
        let data = vec![
            LabeledSample { x: vec![0.25, 0.5], y: 1 },
            LabeledSample { x: vec![0.1234567890123456, 1.0], y: -1 },
        ];
        let text = dataset_to_csv(&data);
        let back = dataset_from_csv(&text).unwrap();
        assert_eq!(data, back);
    }
}
