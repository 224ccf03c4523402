use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-overlapping framing of a waveform: `frame_count` frames of
/// `frame_len` samples each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLayout {
    frame_len: usize,
    frame_count: usize,
}

impl FrameLayout {
    pub fn new(frame_len: usize, frame_count: usize) -> Result<Self> {
        if frame_len < 2 {
            return Err(Error::invalid("frame length must be at least 2 samples"));
        }
        if frame_count == 0 {
            return Err(Error::invalid("frame count must be positive"));
        }
        Ok(FrameLayout {
            frame_len,
            frame_count,
        })
    }

    /// Frames of `frame_ms` milliseconds covering as much of an `n`-sample
    /// waveform as fits; the remainder is dropped.
    pub fn for_duration(sample_rate: u32, frame_ms: f64, n: usize) -> Result<Self> {
        if !(frame_ms > 0.0) {
            return Err(Error::invalid("frame duration must be positive"));
        }
        let k = (frame_ms * 1e-3 * sample_rate as f64).round() as usize;
        if k > n {
            return Err(Error::ShorterThanFrame { len: n, frame: k });
        }
        FrameLayout::new(k, n / k.max(1))
    }

    #[cfg(test)]
    pub(crate) fn unchecked(frame_len: usize, frame_count: usize) -> Self {
        FrameLayout {
            frame_len,
            frame_count,
        }
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    /// Samples covered by all frames, `k·v`.
    pub fn window_len(&self) -> usize {
        self.frame_len * self.frame_count
    }

    pub fn frame_duration_ms(&self, sample_rate: u32) -> f64 {
        self.frame_len as f64 / sample_rate as f64 * 1000.0
    }

    pub fn frame_range(&self, z: usize) -> std::ops::Range<usize> {
        z * self.frame_len..(z + 1) * self.frame_len
    }
}

/// Splits `waveform` into the layout's frames; samples beyond `k·v` are dropped.
pub fn frame<'a>(waveform: &'a [f64], layout: &FrameLayout) -> Result<Vec<&'a [f64]>> {
    let k = layout.frame_len();
    if waveform.len() < k {
        return Err(Error::ShorterThanFrame {
            len: waveform.len(),
            frame: k,
        });
    }
    if waveform.len() < layout.window_len() {
        return Err(Error::WaveformTooShort {
            len: waveform.len(),
            needed: layout.window_len(),
        });
    }
    Ok(waveform[..layout.window_len()].chunks_exact(k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eight_samples_two_frames() {
        let w: Vec<f64> = (0..8).map(f64::from).collect();
        let layout = FrameLayout::new(4, 2).unwrap();
        let frames = frame(&w, &layout).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames.concat(), w);
    }

    #[test]
    fn remainder_is_dropped() {
        let w: Vec<f64> = (0..9).map(f64::from).collect();
        let layout = FrameLayout::for_duration(1000, 4.0, w.len()).unwrap();
        assert_eq!(layout.frame_count(), 2);
        let frames = frame(&w, &layout).unwrap();
        assert_eq!(frames.concat(), w[..8].to_vec());
    }

    #[test]
    fn shorter_than_one_frame() {
        let layout = FrameLayout::new(4, 1).unwrap();
        let err = frame(&[0.0; 3], &layout).unwrap_err();
        assert_eq!(
            err.to_string(),
            "waveform shorter than one frame (3 samples, frame is 4)"
        );
        assert!(err
            .to_string()
            .starts_with("waveform shorter than one frame"));
    }

    #[test]
    fn frame_len_one_rejected() {
        assert!(FrameLayout::new(1, 4).is_err());
    }

    #[test]
    fn twenty_ms_default_frame() {
        let layout = FrameLayout::for_duration(20_000, 20.0, 10_000).unwrap();
        assert_eq!(layout.frame_len(), 400);
        assert_eq!(layout.frame_count(), 25);
        assert_eq!(layout.frame_duration_ms(20_000), 20.0);
    }

    proptest! {
        #[test]
        fn frame_then_concat_is_identity(k in 2usize..9, v in 1usize..7, seed in any::<u64>()) {
            let w: Vec<f64> = (0..k * v).map(|i| (i as u64 ^ seed) as f64).collect();
            let layout = FrameLayout::new(k, v).unwrap();
            let frames = frame(&w, &layout).unwrap();
            prop_assert_eq!(frames.len(), v);
            prop_assert_eq!(frames.concat(), w);
        }
    }
}
