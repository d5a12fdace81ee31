//! Synthetic colored-object stream standing in for a conveyor-belt camera.
//!
//! Each instance is a 16x16 RGB image whose class is its dominant color
//! channel. Images are turned into 24-dimensional feature vectors (three
//! 8-bin per-channel histograms) and fed one at a time, either clean or
//! passed through a disruptor (darkness filter or histogram equalization).

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IMAGE_SIDE: usize = 16;
pub const PIXEL_COUNT: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const BINS_PER_CHANNEL: usize = 8;
pub const FEATURE_LEN: usize = 3 * BINS_PER_CHANNEL;

/// Object class, named after the dominant color channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorClass {
    Red,
    Green,
    Blue,
}

impl ColorClass {
    pub const ALL: [ColorClass; 3] = [ColorClass::Red, ColorClass::Green, ColorClass::Blue];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ColorClass::Red => "red",
            ColorClass::Green => "green",
            ColorClass::Blue => "blue",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for ColorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedMode {
    Normal,
    Disrupted,
}

impl FeedMode {
    pub fn name(self) -> &'static str {
        match self {
            FeedMode::Normal => "normal",
            FeedMode::Disrupted => "disrupted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normal" => Some(FeedMode::Normal),
            "disrupted" => Some(FeedMode::Disrupted),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticImage {
    /// Row-major pixels, `[r, g, b]` per pixel.
    pub pixels: Vec<[u8; 3]>,
    pub true_class: ColorClass,
}

impl SyntheticImage {
    pub fn filled(value: [u8; 3], true_class: ColorClass) -> Self {
        Self {
            pixels: vec![value; PIXEL_COUNT],
            true_class,
        }
    }

    pub fn channel_total(&self, channel: usize) -> u64 {
        self.pixels.iter().map(|p| p[channel] as u64).sum()
    }

    pub fn channel_mean(&self, channel: usize) -> f64 {
        self.channel_total(channel) as f64 / self.pixels.len() as f64
    }

    /// Binary PPM (P6) encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n").into_bytes();
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureInstance {
    pub features: Vec<f64>,
    pub true_class: ColorClass,
    pub mode: FeedMode,
}

/// Intensity ranges used by the object generator.
///
/// The dominant channel is drawn uniformly from `dominant`, the two other
/// channels from `other`, independently per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectPalette {
    pub dominant: (u8, u8),
    pub other: (u8, u8),
}

impl Default for ObjectPalette {
    fn default() -> Self {
        Self {
            dominant: (176, 255),
            other: (32, 63),
        }
    }
}

impl ObjectPalette {
    pub fn validate(&self) -> Result<()> {
        let (dlo, dhi) = self.dominant;
        let (olo, ohi) = self.other;
        if dlo > dhi || olo > ohi {
            return Err(Error::config("palette", "range bounds are inverted"));
        }
        if (dlo as u32 + dhi as u32) < 320 {
            return Err(Error::config("palette.dominant", "mean intensity must be at least 160"));
        }
        if (olo as u32 + ohi as u32) > 160 {
            return Err(Error::config("palette.other", "mean intensity must be at most 80"));
        }
        Ok(())
    }
}

/// Draws one object image of the given class.
pub fn generate_object<R: Rng + ?Sized>(class: ColorClass, palette: &ObjectPalette, rng: &mut R) -> SyntheticImage {
    let dominant = class.index();
    let pixels = (0..PIXEL_COUNT)
        .map(|_| {
            let mut px = [0u8; 3];
            for (ch, value) in px.iter_mut().enumerate() {
                let (lo, hi) = if ch == dominant { palette.dominant } else { palette.other };
                *value = rng.random_range(lo..=hi);
            }
            px
        })
        .collect();
    SyntheticImage {
        pixels,
        true_class: class,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Disruptor {
    Darkness { factor: f64 },
    HistogramEqualization,
}

impl Default for Disruptor {
    fn default() -> Self {
        Disruptor::Darkness { factor: 0.2 }
    }
}

type DisruptorFactory = fn(Option<f64>) -> Result<Disruptor>;

const REGISTRY: &[(&str, DisruptorFactory)] = &[
    ("darkness", |factor| {
        let d = Disruptor::Darkness {
            factor: factor.unwrap_or(0.2),
        };
        d.validate()?;
        Ok(d)
    }),
    ("histogram-equalization", |_| Ok(Disruptor::HistogramEqualization)),
];

impl Disruptor {
    /// Looks a disruptor up by its registry name.
    pub fn from_name(name: &str, parameter: Option<f64>) -> Result<Self> {
        REGISTRY
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, make)| make(parameter))
            .unwrap_or_else(|| Err(Error::UnknownDisruptor(name.to_string())))
    }

    pub fn names() -> impl Iterator<Item = &'static str> {
        REGISTRY.iter().map(|(n, _)| *n)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Disruptor::Darkness { .. } => "darkness",
            Disruptor::HistogramEqualization => "histogram-equalization",
        }
    }

    /// Darkness factor must lie in (0, 1]; 1.0 is the identity filter.
    pub fn validate(&self) -> Result<()> {
        if let Disruptor::Darkness { factor } = *self {
            if !(factor > 0.0 && factor <= 1.0) {
                return Err(Error::config("disruptor.factor", format!("{factor} is outside (0, 1]")));
            }
        }
        Ok(())
    }

    pub fn apply(&self, img: &SyntheticImage) -> SyntheticImage {
        match *self {
            Disruptor::Darkness { factor } => darken(img, factor),
            Disruptor::HistogramEqualization => equalize(img),
        }
    }
}

fn darken(img: &SyntheticImage, factor: f64) -> SyntheticImage {
    let pixels = img
        .pixels
        .iter()
        .map(|p| p.map(|v| (v as f64 * factor).floor() as u8))
        .collect();
    SyntheticImage {
        pixels,
        true_class: img.true_class,
    }
}

fn equalize(img: &SyntheticImage) -> SyntheticImage {
    let mut pixels = img.pixels.clone();
    let n = pixels.len() as u64;
    for ch in 0..3 {
        let mut counts = [0u64; 256];
        for p in &img.pixels {
            counts[p[ch] as usize] += 1;
        }
        let mut cdf = [0u64; 256];
        let mut acc = 0;
        for (level, c) in counts.iter().enumerate() {
            acc += c;
            cdf[level] = acc;
        }
        let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
        // A constant channel has no spread to redistribute.
        if n == cdf_min {
            continue;
        }
        let span = (n - cdf_min) as f64;
        let lut: Vec<u8> = cdf
            .iter()
            .map(|&c| ((c.saturating_sub(cdf_min)) as f64 / span * 255.0).round() as u8)
            .collect();
        for p in pixels.iter_mut() {
            p[ch] = lut[p[ch] as usize];
        }
    }
    SyntheticImage {
        pixels,
        true_class: img.true_class,
    }
}

pub fn apply_disruptor(img: &SyntheticImage, d: &Disruptor) -> SyntheticImage {
    d.apply(img)
}

/// Three concatenated 8-bin channel histograms, each summing to one.
pub fn extract_histogram(img: &SyntheticImage, mode: FeedMode) -> FeatureInstance {
    let mut features = vec![0.0; FEATURE_LEN];
    let width = 256 / BINS_PER_CHANNEL;
    for p in &img.pixels {
        for (ch, &v) in p.iter().enumerate() {
            features[ch * BINS_PER_CHANNEL + v as usize / width] += 1.0;
        }
    }
    let total = img.pixels.len() as f64;
    features.iter_mut().for_each(|f| *f /= total);
    FeatureInstance {
        features,
        true_class: img.true_class,
        mode,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassOrder {
    #[default]
    RoundRobin,
    Shuffled,
}

/// When a scheduled disruption is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixAt {
    Iteration(usize),
    OnRecovery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedSchedule {
    pub steady_len: usize,
    pub disrupt_start: usize,
    pub fix_at: FixAt,
    pub disruptor: Disruptor,
    pub cycles: usize,
}

impl FeedSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.disrupt_start < self.steady_len {
            return Err(Error::config("disrupt_start", "must not precede the end of the steady period"));
        }
        if self.cycles == 0 {
            return Err(Error::config("cycles", "must be at least 1"));
        }
        if let FixAt::Iteration(fix) = self.fix_at {
            if fix <= self.disrupt_start {
                return Err(Error::config("fix_at", "must come after disrupt_start"));
            }
        }
        self.disruptor.validate()
    }

    /// Static disruption windows, one per cycle, when the fix iteration is known
    /// up front. Consecutive cycles are separated by a clean period of `steady_len`.
    pub fn windows(&self) -> Option<Vec<DisruptionWindow>> {
        let FixAt::Iteration(fix) = self.fix_at else {
            return None;
        };
        let len = fix - self.disrupt_start;
        let period = len + self.steady_len;
        Some(
            (0..self.cycles)
                .map(|k| DisruptionWindow {
                    start: self.disrupt_start + k * period,
                    end: Some(self.disrupt_start + k * period + len),
                    disruptor: self.disruptor,
                })
                .collect(),
        )
    }
}

/// Half-open iteration range `[start, end)` fed in disrupted mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisruptionWindow {
    pub start: usize,
    pub end: Option<usize>,
    pub disruptor: Disruptor,
}

/// Streams one feature instance per iteration.
#[derive(Debug, Clone)]
pub struct Feeder {
    rng: ChaCha8Rng,
    palette: ObjectPalette,
    classes: Vec<ColorClass>,
    order: ClassOrder,
    round: Vec<ColorClass>,
    iteration: usize,
    windows: Vec<DisruptionWindow>,
    active: Option<Disruptor>,
    budget: Option<usize>,
    last_image: Option<SyntheticImage>,
}

impl Feeder {
    pub fn new(seed: u64, n_classes: usize, palette: ObjectPalette, order: ClassOrder) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Self {
            rng,
            palette,
            classes: ColorClass::ALL[..n_classes.clamp(1, 3)].to_vec(),
            order,
            round: Vec::new(),
            iteration: 0,
            windows: Vec::new(),
            active: None,
            budget: None,
            last_image: None,
        }
    }

    pub fn with_windows(mut self, windows: Vec<DisruptionWindow>) -> Self {
        self.windows = windows;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }

    /// Index of the next instance to be emitted.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn active_disruptor(&self) -> Option<Disruptor> {
        self.active
    }

    pub fn is_disrupted(&self) -> bool {
        self.active.is_some()
    }

    /// Switches to disrupted mode from the next instance onward.
    pub fn inject(&mut self, d: Disruptor) {
        self.active = Some(d);
    }

    /// Returns to normal mode from the next instance onward.
    pub fn fix(&mut self) {
        self.active = None;
    }

    /// The raw (possibly disrupted) image behind the last emitted instance.
    pub fn last_image(&self) -> Option<&SyntheticImage> {
        self.last_image.as_ref()
    }

    fn next_class(&mut self) -> ColorClass {
        match self.order {
            ClassOrder::RoundRobin => self.classes[self.iteration % self.classes.len()],
            ClassOrder::Shuffled => {
                if self.round.is_empty() {
                    self.round = self.classes.clone();
                    self.round.shuffle(&mut self.rng);
                    self.round.reverse();
                }
                self.round.pop().expect("round refilled above")
            }
        }
    }

    pub fn next_instance(&mut self) -> Result<FeatureInstance> {
        if let Some(budget) = self.budget {
            if self.iteration >= budget {
                return Err(Error::StreamExhausted(budget));
            }
        }
        let i = self.iteration;
        for w in &self.windows {
            if w.start == i {
                self.active = Some(w.disruptor);
            }
            if w.end == Some(i) {
                self.active = None;
            }
        }
        let class = self.next_class();
        let clean = generate_object(class, &self.palette, &mut self.rng);
        let (img, mode) = match &self.active {
            Some(d) => (d.apply(&clean), FeedMode::Disrupted),
            None => (clean, FeedMode::Normal),
        };
        let instance = extract_histogram(&img, mode);
        self.last_image = Some(img);
        self.iteration += 1;
        Ok(instance)
    }
}

/// Writes one PPM per instance plus `manifest.csv` (iteration, class, mode).
pub fn export_dataset(feeder: &mut Feeder, count: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join("manifest.csv");
    let mut manifest = csv::Writer::from_path(&manifest_path).map_err(|e| Error::Csv {
        path: manifest_path.clone(),
        source: e,
    })?;
    let csv_err = |e| Error::Csv {
        path: manifest_path.clone(),
        source: e,
    };
    manifest.write_record(["iteration", "class", "mode"]).map_err(csv_err)?;
    let mut paths = Vec::with_capacity(count + 1);
    for _ in 0..count {
        let i = feeder.iteration();
        let inst = feeder.next_instance()?;
        let path = dir.join(format!("{i:06}.ppm"));
        let img = feeder.last_image().expect("instance just emitted");
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(&img.to_ppm()).map_err(|e| Error::io(&path, e))?;
        manifest
            .write_record([i.to_string(), inst.true_class.to_string(), inst.mode.name().to_string()])
            .map_err(csv_err)?;
        paths.push(path);
    }
    manifest.flush().map_err(|e| Error::io(&manifest_path, e))?;
    paths.push(manifest_path);
    Ok(paths)
}
