use serde::Serialize;

/// Per-sample residuals with their sup and root-mean-square.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub samples: Vec<f64>,
    pub sup: f64,
    pub rms: f64,
}

impl ResidualReport {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let sup = samples.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let rms = if samples.is_empty() {
            0.0
        } else {
            (samples.iter().map(|r| r * r).sum::<f64>() / samples.len() as f64).sqrt()
        };
        Self { samples, sup, rms }
    }
}
