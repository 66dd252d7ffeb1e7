use crate::error::{Error, Result};

/// Time-aligned, uniformly sampled channels of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSignal {
    channels: Vec<Vec<f64>>,
}

impl MultiSignal {
    pub fn new(channels: Vec<Vec<f64>>) -> Result<Self> {
        let first = channels.first().ok_or(Error::EmptySignal)?.len();
        if channels.iter().any(|c| c.len() != first) {
            let lens: Vec<String> = channels.iter().map(|c| c.len().to_string()).collect();
            return Err(Error::RaggedChannels(lens.join(", ")));
        }
        Ok(Self { channels })
    }

    pub fn single(channel: Vec<f64>) -> Self {
        Self {
            channels: vec![channel],
        }
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Number of samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Keeps only the listed channels, in the given order.
    pub fn select(&self, channels: &[usize]) -> Self {
        Self {
            channels: channels.iter().map(|&i| self.channels[i].clone()).collect(),
        }
    }
}
