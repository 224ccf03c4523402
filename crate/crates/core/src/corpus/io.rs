//! 16-bit PCM mono WAV and the corpus manifest.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::WordCorpus;
use crate::error::{Error, Result};

fn wav_spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

fn quantize(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Reads a mono 16-bit PCM file, mapping samples to `[-1, 1)`.
pub fn read_wav(path: &Path) -> Result<(u32, Vec<f64>)> {
    let reader = hound::WavReader::open(path)?;
    decode_reader(reader)
}

pub fn decode_wav(bytes: &[u8]) -> Result<(u32, Vec<f64>)> {
    decode_reader(hound::WavReader::new(Cursor::new(bytes))?)
}

fn decode_reader<R: std::io::Read>(reader: hound::WavReader<R>) -> Result<(u32, Vec<f64>)> {
    let spec = reader.spec();
    if spec.channels != 1
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(Error::Parse(format!(
            "expected 16-bit PCM mono, got {} channel(s) at {} bits",
            spec.channels, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((spec.sample_rate, samples))
}

/// Writes samples scaled by `gain`, clipping to the 16-bit range.
pub fn write_wav(path: &Path, sample_rate: u32, samples: &[f64], gain: f64) -> Result<()> {
    let mut w = hound::WavWriter::create(path, wav_spec(sample_rate))?;
    for &x in samples {
        w.write_sample(quantize(x * gain))?;
    }
    w.finalize()?;
    Ok(())
}

pub fn encode_wav(sample_rate: u32, samples: &[f64], gain: f64) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut buf, wav_spec(sample_rate))?;
        for &x in samples {
            w.write_sample(quantize(x * gain))?;
        }
        w.finalize()?;
    }
    Ok(buf.into_inner())
}

/// Gain that maps the largest absolute sample to `headroom`.
pub fn peak_gain<'a>(signals: impl IntoIterator<Item = &'a [f64]>, headroom: f64) -> f64 {
    let peak = signals
        .into_iter()
        .flat_map(|s| s.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        headroom / peak
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestWord {
    pub label: String,
    pub files: Vec<PathBuf>,
}

/// Label → realization files, with paths relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub sample_rate: u32,
    /// Gain applied on export; samples are divided by it on import.
    #[serde(default = "unit_gain")]
    pub gain: f64,
    pub words: Vec<ManifestWord>,
}

fn unit_gain() -> f64 {
    1.0
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// How import reconciles realizations of different lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LengthPolicy {
    /// Truncate everything to the shortest realization.
    #[default]
    Shortest,
    /// Zero-pad or truncate to a fixed sample count.
    Fixed(usize),
}

/// Loads every file listed in a manifest into a corpus.
pub fn import_corpus(manifest_path: &Path, policy: LengthPolicy) -> Result<WordCorpus> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    if !(manifest.gain > 0.0) {
        return Err(Error::Parse("manifest gain must be positive".into()));
    }
    let mut labels = Vec::new();
    let mut words = Vec::new();
    for w in &manifest.words {
        let mut reals = Vec::new();
        for f in &w.files {
            let path = base.join(f);
            let (rate, samples) = read_wav(&path).map_err(|e| match e {
                Error::Wav(hound::Error::IoError(io)) => Error::io(&path, io),
                other => other,
            })?;
            if rate != manifest.sample_rate {
                return Err(Error::InvalidCorpus(format!(
                    "{} is sampled at {rate} Hz, manifest says {}",
                    path.display(),
                    manifest.sample_rate
                )));
            }
            reals.push(
                samples
                    .iter()
                    .map(|x| x / manifest.gain)
                    .collect::<Vec<f64>>(),
            );
        }
        labels.push(w.label.clone());
        words.push(reals);
    }
    let len = match policy {
        LengthPolicy::Fixed(n) => n,
        LengthPolicy::Shortest => words
            .iter()
            .flatten()
            .map(Vec::len)
            .min()
            .ok_or_else(|| Error::InvalidCorpus("manifest lists no files".into()))?,
    };
    WordCorpus::from_ragged(manifest.sample_rate, labels, words, len)
}

/// Writes one WAV per realization plus `manifest.toml` into `dir`, using a
/// single corpus-wide gain so relative levels survive quantization.
pub fn export_corpus(corpus: &WordCorpus, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let gain = peak_gain(
        (0..corpus.word_count()).flat_map(|m| corpus.realizations(m).iter().map(Vec::as_slice)),
        0.9,
    );
    let mut words = Vec::new();
    for m in 0..corpus.word_count() {
        let mut files = Vec::new();
        for (j, r) in corpus.realizations(m).iter().enumerate() {
            let name = PathBuf::from(format!("w{m:02}_r{j:02}.wav"));
            write_wav(&dir.join(&name), corpus.sample_rate(), r, gain)?;
            files.push(name);
        }
        words.push(ManifestWord {
            label: corpus.labels()[m].clone(),
            files,
        });
    }
    let manifest = Manifest {
        sample_rate: corpus.sample_rate(),
        gain,
        words,
    };
    let path = dir.join("manifest.toml");
    manifest.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize_corpus, SynthSpec};

    #[test]
    fn wav_bytes_round_trip() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 / 10.0).sin() * 0.5).collect();
        let bytes = encode_wav(8000, &x, 1.0).unwrap();
        let (rate, y) = decode_wav(&bytes).unwrap();
        assert_eq!(rate, 8000);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn out_of_range_samples_clip() {
        let bytes = encode_wav(8000, &[2.0, -2.0], 1.0).unwrap();
        let (_, y) = decode_wav(&bytes).unwrap();
        assert_eq!(y, vec![32767.0 / 32768.0, -1.0]);
    }

    #[test]
    fn export_then_import_preserves_corpus_up_to_quantization() {
        let mut spec = SynthSpec::default_corpus(2);
        spec.realizations = 2;
        spec.words.truncate(3);
        let c = synthesize_corpus(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = export_corpus(&c, dir.path()).unwrap();
        let back = import_corpus(&manifest, LengthPolicy::Shortest).unwrap();
        assert_eq!(back.labels(), c.labels());
        assert_eq!(back.samples_per_realization(), c.samples_per_realization());
        let m = Manifest::load(&manifest).unwrap();
        let step = 1.0 / 32768.0 / m.gain;
        for w in 0..3 {
            for j in 0..2 {
                for (a, b) in c.realization(w, j).iter().zip(back.realization(w, j)) {
                    assert!((a - b).abs() <= step);
                }
            }
        }
    }

    #[test]
    fn import_truncates_to_shortest() {
        let dir = tempfile::tempdir().unwrap();
        write_wav(&dir.path().join("a.wav"), 8000, &[0.1; 10], 1.0).unwrap();
        write_wav(&dir.path().join("b.wav"), 8000, &[0.2; 7], 1.0).unwrap();
        let m = Manifest {
            sample_rate: 8000,
            gain: 1.0,
            words: vec![
                ManifestWord {
                    label: "a".into(),
                    files: vec!["a.wav".into()],
                },
                ManifestWord {
                    label: "b".into(),
                    files: vec!["b.wav".into()],
                },
            ],
        };
        let path = dir.path().join("manifest.toml");
        m.save(&path).unwrap();
        let c = import_corpus(&path, LengthPolicy::Shortest).unwrap();
        assert_eq!(c.samples_per_realization(), 7);
        let c = import_corpus(&path, LengthPolicy::Fixed(12)).unwrap();
        assert_eq!(c.realization(1, 0)[11], 0.0);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            sample_rate: 8000,
            gain: 1.0,
            words: vec![ManifestWord {
                label: "a".into(),
                files: vec!["nope.wav".into()],
            }],
        };
        let path = dir.path().join("manifest.toml");
        m.save(&path).unwrap();
        assert_eq!(
            import_corpus(&path, LengthPolicy::Shortest)
                .unwrap_err()
                .code(),
            "io"
        );
    }
}
