//! Link-level and classification metrics.

use crate::error::{Error, Result};

/// Block error rate: fraction of mismatched entries.
pub fn bler(decoded: &[usize], truth: &[usize]) -> Result<f64> {
    if decoded.is_empty() || decoded.len() != truth.len() {
        return Err(Error::Config(format!(
            "bler needs equal-length nonempty inputs, got {} and {}",
            decoded.len(),
            truth.len()
        )));
    }
    let errors = decoded.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / decoded.len() as f64)
}

/// Bit error rate over two equal-length bit streams.
pub fn ber(decoded: &[u8], truth: &[u8]) -> Result<f64> {
    if decoded.is_empty() || decoded.len() != truth.len() {
        return Err(Error::Config(format!(
            "ber needs equal-length nonempty inputs, got {} and {}",
            decoded.len(),
            truth.len()
        )));
    }
    let errors = decoded.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / decoded.len() as f64)
}

/// `snr = ebno + 10·log10(bits per channel use)`.
pub fn ebno_to_snr(ebno_db: f64, bits_per_channel_use: f64) -> Result<f64> {
    if !(bits_per_channel_use > 0.0) {
        return Err(Error::Config(format!(
            "bits per channel use must be positive, got {bits_per_channel_use}"
        )));
    }
    Ok(ebno_db + 10.0 * bits_per_channel_use.log10())
}

/// K-class confusion matrix; rows are truth, columns are predictions.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_pairs(predicted: &[usize], truth: &[usize], classes: usize) -> Result<Self> {
        if predicted.is_empty() || predicted.len() != truth.len() {
            return Err(Error::Config(
                "confusion matrix needs equal-length nonempty inputs".to_string(),
            ));
        }
        let mut m = Self::new(classes);
        for (&p, &t) in predicted.iter().zip(truth) {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(Error::Config(format!(
                "class index out of range: truth {truth}, predicted {predicted}, classes {}",
                self.classes
            )));
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        debug_assert_eq!(self.classes, other.classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.classes).map(|c| self.count(c, c)).sum();
        correct as f64 / self.total().max(1) as f64
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.count(class, class)
    }

    pub fn false_positives(&self, class: usize) -> u64 {
        (0..self.classes).filter(|&t| t != class).map(|t| self.count(t, class)).sum()
    }

    pub fn false_negatives(&self, class: usize) -> u64 {
        (0..self.classes).filter(|&p| p != class).map(|p| self.count(class, p)).sum()
    }

    /// Precision for one class; 0 when the class was never predicted.
    pub fn precision(&self, class: usize) -> f64 {
        let tp = self.true_positives(class);
        let denom = tp + self.false_positives(class);
        if denom == 0 {
            0.0
        } else {
            tp as f64 / denom as f64
        }
    }

    /// Recall for one class; 0 when the class never occurs in the truth.
    pub fn recall(&self, class: usize) -> f64 {
        let tp = self.true_positives(class);
        let denom = tp + self.false_negatives(class);
        if denom == 0 {
            0.0
        } else {
            tp as f64 / denom as f64
        }
    }

    pub fn f1(&self, class: usize) -> f64 {
        let p = self.precision(class);
        let r = self.recall(class);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn macro_precision(&self) -> f64 {
        (0..self.classes).map(|c| self.precision(c)).sum::<f64>() / self.classes as f64
    }

    pub fn macro_recall(&self) -> f64 {
        (0..self.classes).map(|c| self.recall(c)).sum::<f64>() / self.classes as f64
    }

    pub fn macro_f1(&self) -> f64 {
        (0..self.classes).map(|c| self.f1(c)).sum::<f64>() / self.classes as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bler_extremes() {
        assert_eq!(bler(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(bler(&[1, 2, 3], &[4, 5, 6]).unwrap(), 1.0);
        assert!(bler(&[], &[]).is_err());
        assert!(bler(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn ebno_to_snr_values() {
        assert_eq!(ebno_to_snr(0.0, 1.0).unwrap(), 0.0);
        let rate_4_7 = ebno_to_snr(0.0, 4.0 / 7.0).unwrap();
        assert!((rate_4_7 - (-2.4304)).abs() < 1e-3, "got {rate_4_7}");
        assert!(ebno_to_snr(0.0, 0.0).is_err());
    }

    #[test]
    fn hand_counted_three_class_confusion() {
        // truth:     0 0 0 1 1 2 2 2 2
        // predicted: 0 0 1 1 2 2 2 0 2
        let truth = [0, 0, 0, 1, 1, 2, 2, 2, 2];
        let predicted = [0, 0, 1, 1, 2, 2, 2, 0, 2];
        let m = ConfusionMatrix::from_pairs(&predicted, &truth, 3).unwrap();

        // Class 0: TP=2, FP=1 (one true-2 predicted 0), FN=1.
        assert_eq!(m.true_positives(0), 2);
        assert_eq!(m.false_positives(0), 1);
        assert_eq!(m.false_negatives(0), 1);
        assert!((m.precision(0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall(0) - 2.0 / 3.0).abs() < 1e-12);

        // Class 1: TP=1, FP=1, FN=1 → precision = recall = 0.5.
        assert!((m.precision(1) - 0.5).abs() < 1e-12);
        assert!((m.recall(1) - 0.5).abs() < 1e-12);
        assert!((m.f1(1) - 0.5).abs() < 1e-12);

        // Class 2: TP=3, FP=1 (true-1 predicted 2), FN=1.
        assert!((m.precision(2) - 0.75).abs() < 1e-12);
        assert!((m.recall(2) - 0.75).abs() < 1e-12);

        assert!((m.accuracy() - 6.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_class_is_config_error() {
        let mut m = ConfusionMatrix::new(2);
        assert!(m.record(0, 2).is_err());
    }
}
