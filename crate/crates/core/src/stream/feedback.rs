use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackMessage {
    pub window_index: i64,
    pub label: usize,
    pub confidence: f64,
    pub latency_us: i64,
}

impl FeedbackMessage {
    pub const CSV_HEADER: &'static str = "window_index,label,confidence,latency_us";

    pub fn to_csv_line(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FeedbackMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{:.6},{}", self.window_index, self.label, self.confidence, self.latency_us)
    }
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> Option<(usize, f64)> {
    probs.iter().copied().enumerate().fold(None, |best, (i, p)| match best {
        Some((_, bp)) if bp >= p => best,
        _ => Some((i, p)),
    })
}

pub fn emit_feedback(window_index: i64, probabilities: &[f64], latency_us: i64, threshold: f64) -> Option<FeedbackMessage> {
    let (label, confidence) = argmax(probabilities)?;
    (confidence >= threshold).then_some(FeedbackMessage { window_index, label, confidence, latency_us })
}
