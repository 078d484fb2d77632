//! Frame-aligned speech features: log-mel audio energies and word indices,
//! plus pluggable TTS / forced-alignment clients with deterministic
//! synthetic fallbacks.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::time::Duration;

use base64::Engine;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::skeleton::FPS;

pub const TTS_URL_ENV: &str = "SGT_TTS_URL";
pub const ALIGNER_URL_ENV: &str = "SGT_ALIGNER_URL";

pub const DEFAULT_SAMPLE_RATE: u32 = 24_000;
pub const DEFAULT_MEL_BANDS: usize = 16;
const ENERGY_FLOOR: f64 = 1e-10;

/// Log energy of a silent band; also used to pad features past the end of
/// the audio.
pub fn silence_level() -> f64 {
    ENERGY_FLOOR.ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordTiming {
    pub word: String,
    pub start: f64,
    pub end: f64,
}

/// Mono PCM audio.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Number of pose frames covered by this audio.
    pub fn n_frames(&self) -> usize {
        frames_for_duration(self.samples.len(), self.sample_rate)
    }

    /// 16-bit PCM WAV bytes.
    pub fn to_wav_bytes(&self) -> Result<Vec<u8>> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut buf, spec)
                .map_err(|e| Error::InvalidWav(e.to_string()))?;
            for &s in &self.samples {
                let v = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
                w.write_sample(v).map_err(|e| Error::InvalidWav(e.to_string()))?;
            }
            w.finalize().map_err(|e| Error::InvalidWav(e.to_string()))?;
        }
        Ok(buf.into_inner())
    }

    /// Reads 16-bit PCM WAV; multi-channel input is averaged to mono.
    pub fn from_wav_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r =
            hound::WavReader::new(Cursor::new(bytes)).map_err(|e| Error::InvalidWav(e.to_string()))?;
        let spec = r.spec();
        if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
            return Err(Error::InvalidWav(format!(
                "expected 16-bit PCM, got {:?} {} bits",
                spec.sample_format, spec.bits_per_sample
            )));
        }
        let channels = spec.channels.max(1) as usize;
        let raw: Vec<i16> = r
            .samples::<i16>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidWav(e.to_string()))?;
        let samples = raw
            .chunks(channels)
            .map(|c| c.iter().map(|&v| v as f32 / i16::MAX as f32).sum::<f32>() / channels as f32)
            .collect();
        Ok(Self {
            samples,
            sample_rate: spec.sample_rate,
        })
    }
}

pub fn frames_for_duration(n_samples: usize, sample_rate: u32) -> usize {
    ((n_samples as u64 * FPS as u64 + sample_rate as u64 / 2) / sample_rate as u64) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioFeatureConfig {
    pub n_mels: usize,
    pub fps: u32,
}

impl Default for AudioFeatureConfig {
    fn default() -> Self {
        Self {
            n_mels: DEFAULT_MEL_BANDS,
            fps: FPS,
        }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over `n_bins` FFT bins, as `(first_bin, weights)`.
fn mel_filterbank(n_mels: usize, fft_len: usize, sample_rate: u32) -> Vec<(usize, Vec<f64>)> {
    let n_bins = fft_len / 2 + 1;
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|k| mel_to_hz(top * k as f64 / (n_mels + 1) as f64) * fft_len as f64 / sample_rate as f64)
        .collect();
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let first = lo.floor().max(0.0) as usize;
            let last = (hi.ceil() as usize).min(n_bins - 1);
            let w = (first..=last)
                .map(|b| {
                    let f = b as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect();
            (first, w)
        })
        .collect()
}

/// Analysis window length in samples: two hops, rounded down to even.
pub fn window_len(sample_rate: u32, fps: u32) -> usize {
    let hop = sample_rate as f64 / fps as f64;
    ((2.0 * hop) as usize) & !1
}

/// Hann-windowed frame `i`, centred on sample `i * sample_rate / fps`,
/// zero-padded outside the signal.
pub fn analysis_frame(samples: &[f32], sample_rate: u32, fps: u32, i: usize) -> Vec<f64> {
    let n = window_len(sample_rate, fps);
    let centre = (i as f64 * sample_rate as f64 / fps as f64).round() as i64;
    let start = centre - (n / 2) as i64;
    (0..n)
        .map(|k| {
            let idx = start + k as i64;
            let s = if idx >= 0 && (idx as usize) < samples.len() {
                samples[idx as usize] as f64
            } else {
                0.0
            };
            let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos();
            s * hann
        })
        .collect()
}

/// One log-mel energy row per pose frame.
pub fn extract_audio_features(wave: &Waveform, cfg: &AudioFeatureConfig) -> Result<Vec<Vec<f64>>> {
    if wave.samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let t = frames_for_duration(wave.samples.len(), wave.sample_rate).max(1);
    let n = window_len(wave.sample_rate, cfg.fps);
    let fft_len = n.next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_len);
    let bank = mel_filterbank(cfg.n_mels, fft_len, wave.sample_rate);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    Ok((0..t)
        .map(|i| {
            let frame = analysis_frame(&wave.samples, wave.sample_rate, cfg.fps, i);
            for (b, v) in buf.iter_mut().enumerate() {
                *v = Complex::new(frame.get(b).copied().unwrap_or(0.0), 0.0);
            }
            fft.process(&mut buf);
            let power: Vec<f64> = buf[..fft_len / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
            bank.iter()
                .map(|(first, w)| {
                    let e: f64 = w.iter().enumerate().map(|(k, wk)| wk * power[first + k]).sum();
                    e.max(ENERGY_FLOOR).ln()
                })
                .collect()
        })
        .collect())
}

/// Lowercased alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

pub const PAD_INDEX: u32 = 0;
const PAD_TOKEN: &str = "<pad>";

/// Token to index map; index 0 is reserved for padding and unknown words.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Dictionary {
    /// Builds a dictionary from corpus words, indices assigned in sorted
    /// token order.
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set: Vec<String> = words
            .into_iter()
            .flat_map(tokenize)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        set.retain(|w| w != PAD_TOKEN);
        let mut tokens = vec![PAD_TOKEN.to_string()];
        tokens.extend(set);
        Self::from_tokens(tokens).expect("built tokens are unique")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN) {
            return Err(Error::InvalidMotion("dictionary must start with <pad>".into()));
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidMotion(format!("duplicate token `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn index_of(&self, word: &str) -> u32 {
        let token = tokenize(word).into_iter().next().unwrap_or_default();
        self.index.get(&token).copied().unwrap_or(PAD_INDEX)
    }

    pub fn word(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }
}

impl Serialize for Dictionary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dictionary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        Self::from_tokens(tokens).map_err(serde::de::Error::custom)
    }
}

/// Frame `i` gets the word whose `[start, end)` contains `i / fps` seconds.
pub fn align_words(timings: &[WordTiming], dict: &Dictionary, t: usize) -> Vec<u32> {
    (0..t)
        .map(|i| {
            let time = i as f64 / FPS as f64;
            timings
                .iter()
                .find(|w| w.start <= time && time < w.end)
                .map_or(PAD_INDEX, |w| dict.index_of(&w.word))
        })
        .collect()
}

/// Speech features aligned to pose frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeechContext {
    pub audio_features: Vec<Vec<f64>>,
    pub word_indices: Vec<u32>,
    pub sample_rate: u32,
    pub text: String,
    pub timings: Vec<WordTiming>,
}

impl SpeechContext {
    pub fn from_waveform(
        text: &str,
        wave: &Waveform,
        timings: Vec<WordTiming>,
        dict: &Dictionary,
        cfg: &AudioFeatureConfig,
    ) -> Result<Self> {
        let audio_features = extract_audio_features(wave, cfg)?;
        let word_indices = align_words(&timings, dict, audio_features.len());
        Ok(Self {
            audio_features,
            word_indices,
            sample_rate: wave.sample_rate,
            text: text.to_string(),
            timings,
        })
    }

    pub fn len(&self) -> usize {
        self.word_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_indices.is_empty()
    }

    pub fn audio_dim(&self) -> usize {
        self.audio_features.first().map_or(0, Vec::len)
    }

    /// Frames `[start, start + len)`; frames past the end are silence with
    /// padding word indices.
    pub fn window(&self, start: usize, len: usize) -> SpeechWindow {
        let dim = self.audio_dim();
        let silent = vec![silence_level(); dim];
        SpeechWindow {
            audio_features: (start..start + len)
                .map(|i| self.audio_features.get(i).cloned().unwrap_or_else(|| silent.clone()))
                .collect(),
            word_indices: (start..start + len)
                .map(|i| self.word_indices.get(i).copied().unwrap_or(PAD_INDEX))
                .collect(),
        }
    }

    pub fn full_window(&self) -> SpeechWindow {
        self.window(0, self.len())
    }
}

/// The per-frame speech inputs of one generator call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeechWindow {
    pub audio_features: Vec<Vec<f64>>,
    pub word_indices: Vec<u32>,
}

impl SpeechWindow {
    pub fn len(&self) -> usize {
        self.word_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_indices.is_empty()
    }
}

/// Deterministic 32-bit value derived from a string.
pub fn stable_hash(s: &str) -> u32 {
    let d = Sha256::digest(s.as_bytes());
    u32::from_le_bytes([d[0], d[1], d[2], d[3]])
}

/// Pitch and loudness of the synthetic voice for one word.
pub fn word_voice(word: &str) -> (f64, f64) {
    let h = stable_hash(word);
    let pitch = 120.0 + (h % 240) as f64;
    let loudness = 0.25 + ((h >> 8) % 1000) as f64 / 1000.0 * 0.65;
    (pitch, loudness)
}

/// Appends one voiced beep with a smooth attack and release.
pub fn push_beep(out: &mut Vec<f32>, sample_rate: u32, seconds: f64, pitch: f64, loudness: f64) {
    let n = (seconds * sample_rate as f64).round() as usize;
    let sr = sample_rate as f64;
    for k in 0..n {
        let tt = k as f64 / sr;
        let env = (std::f64::consts::PI * k as f64 / n as f64).sin().powf(0.5);
        let v = loudness
            * env
            * (0.7 * (2.0 * std::f64::consts::PI * pitch * tt).sin()
                + 0.3 * (2.0 * std::f64::consts::PI * 2.0 * pitch * tt).sin());
        out.push(v as f32);
    }
}

pub trait TtsClient: Send + Sync {
    /// Audio for `text` and, when the backend knows them, word timings.
    fn synthesize(&self, text: &str) -> Result<(Waveform, Option<Vec<WordTiming>>)>;
}

pub trait Aligner: Send + Sync {
    fn align(&self, text: &str, wave: &Waveform) -> Result<Vec<WordTiming>>;
}

/// Offline stand-in voice: one fixed-length beep per word, pitch and
/// loudness derived from the word.
#[derive(Clone, Debug)]
pub struct SyntheticTts {
    pub seconds_per_word: f64,
    pub sample_rate: u32,
}

impl Default for SyntheticTts {
    fn default() -> Self {
        Self {
            seconds_per_word: 0.4,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl TtsClient for SyntheticTts {
    fn synthesize(&self, text: &str) -> Result<(Waveform, Option<Vec<WordTiming>>)> {
        let words = tokenize(text);
        if words.is_empty() {
            return Err(Error::EmptyText);
        }
        let mut samples = Vec::new();
        let mut timings = Vec::with_capacity(words.len());
        for (k, w) in words.iter().enumerate() {
            let (pitch, loudness) = word_voice(w);
            push_beep(&mut samples, self.sample_rate, self.seconds_per_word, pitch, loudness);
            timings.push(WordTiming {
                word: w.clone(),
                start: k as f64 * self.seconds_per_word,
                end: (k + 1) as f64 * self.seconds_per_word,
            });
        }
        Ok((
            Waveform {
                samples,
                sample_rate: self.sample_rate,
            },
            Some(timings),
        ))
    }
}

/// Spreads the words of `text` evenly over the audio duration.
#[derive(Clone, Debug, Default)]
pub struct UniformAligner;

impl Aligner for UniformAligner {
    fn align(&self, text: &str, wave: &Waveform) -> Result<Vec<WordTiming>> {
        let words = tokenize(text);
        let step = wave.duration() / words.len().max(1) as f64;
        Ok(words
            .into_iter()
            .enumerate()
            .map(|(k, word)| WordTiming {
                word,
                start: k as f64 * step,
                end: (k + 1) as f64 * step,
            })
            .collect())
    }
}

fn http_client() -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .map_err(|e| Error::TtsUnavailable(e.to_string()))
}

/// `POST {url}` with `{"text": ...}`; the response body is a WAV file.
#[derive(Clone, Debug)]
pub struct HttpTts {
    pub url: String,
}

impl TtsClient for HttpTts {
    fn synthesize(&self, text: &str) -> Result<(Waveform, Option<Vec<WordTiming>>)> {
        if tokenize(text).is_empty() {
            return Err(Error::EmptyText);
        }
        let resp = http_client()?
            .post(&self.url)
            .json(&serde_json::json!({ "text": text }))
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| Error::TtsUnavailable(e.to_string()))?;
        let bytes = resp.bytes().map_err(|e| Error::TtsUnavailable(e.to_string()))?;
        Ok((Waveform::from_wav_bytes(&bytes)?, None))
    }
}

/// `POST {url}` with `{"text", "sample_rate", "wav_base64"}`; the response
/// is a JSON list of `{"word", "start", "end"}`.
#[derive(Clone, Debug)]
pub struct HttpAligner {
    pub url: String,
}

impl Aligner for HttpAligner {
    fn align(&self, text: &str, wave: &Waveform) -> Result<Vec<WordTiming>> {
        let wav = base64::engine::general_purpose::STANDARD.encode(wave.to_wav_bytes()?);
        let resp = http_client()
            .map_err(|e| Error::AlignerUnavailable(e.to_string()))?
            .post(&self.url)
            .json(&serde_json::json!({
                "text": text,
                "sample_rate": wave.sample_rate,
                "wav_base64": wav,
            }))
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| Error::AlignerUnavailable(e.to_string()))?;
        resp.json::<Vec<WordTiming>>()
            .map_err(|e| Error::AlignerUnavailable(e.to_string()))
    }
}

/// TTS followed by forced alignment.
pub struct SpeechPipeline {
    tts: Box<dyn TtsClient>,
    aligner: Option<Box<dyn Aligner>>,
}

impl Default for SpeechPipeline {
    fn default() -> Self {
        Self {
            tts: Box::new(SyntheticTts::default()),
            aligner: None,
        }
    }
}

impl SpeechPipeline {
    pub fn new(tts: Box<dyn TtsClient>, aligner: Option<Box<dyn Aligner>>) -> Self {
        Self { tts, aligner }
    }

    /// Uses `SGT_TTS_URL` / `SGT_ALIGNER_URL` when set, the synthetic
    /// fallbacks otherwise.
    pub fn from_env() -> Self {
        let tts: Box<dyn TtsClient> = match std::env::var(TTS_URL_ENV) {
            Ok(url) if !url.is_empty() => Box::new(HttpTts { url }),
            _ => Box::new(SyntheticTts::default()),
        };
        let aligner: Option<Box<dyn Aligner>> = match std::env::var(ALIGNER_URL_ENV) {
            Ok(url) if !url.is_empty() => Some(Box::new(HttpAligner { url })),
            _ => None,
        };
        Self { tts, aligner }
    }

    pub fn synthesize_speech(&self, text: &str) -> Result<(Waveform, Vec<WordTiming>)> {
        if tokenize(text).is_empty() {
            return Err(Error::EmptyText);
        }
        let (wave, tts_timings) = self.tts.synthesize(text)?;
        let timings = match (&self.aligner, tts_timings) {
            (Some(a), _) => a.align(text, &wave)?,
            (None, Some(t)) => t,
            (None, None) => UniformAligner.align(text, &wave)?,
        };
        Ok((wave, timings))
    }
}
