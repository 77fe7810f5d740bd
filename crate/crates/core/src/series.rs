//! Multivariate time-series model, kinematic derivation, per-channel
//! standardization and non-overlapping window segmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AIS_CHANNELS: [&str; 4] = ["lat", "lon", "sog", "cog"];
pub const KINEMATIC_CHANNELS: [&str; 4] = ["lat", "lon", "vx", "vy"];

/// One entity's trajectory: `channels[m][t]`, M channels of T steps each.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateSeries {
    entity_id: String,
    timestamps: Vec<i64>,
    channel_names: Vec<String>,
    channels: Vec<Vec<f64>>,
}

impl MultivariateSeries {
    pub fn new(
        entity_id: impl Into<String>,
        timestamps: Vec<i64>,
        channel_names: Vec<String>,
        channels: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let t = timestamps.len();
        if t == 0 {
            return Err(Error::Shape("series must have at least one timestep".into()));
        }
        if channel_names.len() != channels.len() || channels.is_empty() {
            return Err(Error::Schema(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                channels.len()
            )));
        }
        for (name, values) in channel_names.iter().zip(&channels) {
            if values.len() != t {
                return Err(Error::Shape(format!(
                    "channel `{name}` has {} values, expected {t}",
                    values.len()
                )));
            }
            if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Value(format!(
                    "channel `{name}` has a non-finite value at step {pos}"
                )));
            }
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Value("timestamps must be strictly increasing".into()));
        }
        Ok(MultivariateSeries {
            entity_id: entity_id.into(),
            timestamps,
            channel_names,
            channels,
        })
    }

    pub fn entity_id(&self) -> &str {
        &self.entity_id
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channel_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.channels[i].as_slice())
    }
}

/// A fixed-width window of a bag, stored channel-major (`window[m][t]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub bag_id: String,
    pub index: usize,
    pub window: Vec<Vec<f64>>,
    pub pseudo_label: u8,
    pub true_label: Option<u8>,
}

impl Instance {
    pub fn n_channels(&self) -> usize {
        self.window.len()
    }

    pub fn width(&self) -> usize {
        self.window.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub entity_id: String,
    pub label: u8,
    pub instances: Vec<Instance>,
}

impl Bag {
    /// Builds a bag from raw windows, stamping pseudo labels from `label`.
    pub fn from_windows(
        entity_id: impl Into<String>,
        label: u8,
        windows: Vec<Vec<Vec<f64>>>,
        true_labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let entity_id = entity_id.into();
        if label > 1 {
            return Err(Error::Value(format!("bag label must be 0 or 1, got {label}")));
        }
        if windows.is_empty() {
            return Err(Error::Shape(format!("bag `{entity_id}` has no windows")));
        }
        if let Some(t) = &true_labels {
            if t.len() != windows.len() {
                return Err(Error::Shape(format!(
                    "bag `{entity_id}`: {} true labels for {} windows",
                    t.len(),
                    windows.len()
                )));
            }
        }
        let m = windows[0].len();
        let w = windows[0].first().map_or(0, Vec::len);
        for win in &windows {
            if win.len() != m || win.iter().any(|row| row.len() != w) {
                return Err(Error::Shape(format!(
                    "bag `{entity_id}` has windows of inconsistent shape"
                )));
            }
        }
        let instances = windows
            .into_iter()
            .enumerate()
            .map(|(index, window)| Instance {
                bag_id: entity_id.clone(),
                index,
                window,
                pseudo_label: label,
                true_label: true_labels.as_ref().map(|t| t[index]),
            })
            .collect();
        Ok(Bag {
            entity_id,
            label,
            instances,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn true_labels(&self) -> Option<Vec<u8>> {
        self.instances.iter().map(|i| i.true_label).collect()
    }

    /// Bag label implied by the instance labels: positive iff any instance is.
    pub fn implied_label(&self) -> Option<u8> {
        self.true_labels()
            .map(|labels| u8::from(labels.iter().any(|&l| l == 1)))
    }
}

/// Separate `sin` and `cos` calls. An optimizer may fuse `f64::sin_cos` into
/// a single libm `sincos`, which can round differently, so results would
/// depend on the optimization level.
pub(crate) fn sin_cos(x: f64) -> (f64, f64) {
    (x.sin(), std::hint::black_box(x).cos())
}

/// Replaces `[lat, lon, sog, cog]` by `[lat, lon, vx, vy]`.
///
/// COG is degrees clockwise from true north, so the eastward component uses
/// the sine and the northward component the cosine.
pub fn derive_kinematics(series: &MultivariateSeries) -> Result<MultivariateSeries> {
    let fetch = |name: &str| {
        series
            .channel(name)
            .ok_or_else(|| Error::Schema(format!("missing required channel `{name}`")))
    };
    let lat = fetch("lat")?;
    let lon = fetch("lon")?;
    let sog = fetch("sog")?;
    let cog = fetch("cog")?;

    let mut vx = Vec::with_capacity(series.len());
    let mut vy = Vec::with_capacity(series.len());
    for (t, (&speed, &course)) in sog.iter().zip(cog).enumerate() {
        if !speed.is_finite() || !course.is_finite() {
            return Err(Error::Value(format!("non-finite sog/cog at step {t}")));
        }
        let (sin, cos) = sin_cos(course.to_radians());
        vx.push(speed * sin);
        vy.push(speed * cos);
    }

    MultivariateSeries::new(
        series.entity_id(),
        series.timestamps().to_vec(),
        KINEMATIC_CHANNELS.iter().map(|s| s.to_string()).collect(),
        vec![lat.to_vec(), lon.to_vec(), vx, vy],
    )
}

/// Per-channel z-score parameters (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub channel_names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits from per-channel value streams. `columns(m)` yields every training
    /// value of channel `m`.
    pub fn fit_columns<'a, I>(channel_names: Vec<String>, columns: impl Fn(usize) -> I) -> Result<Self>
    where
        I: Iterator<Item = &'a f64>,
    {
        let mut mean = Vec::with_capacity(channel_names.len());
        let mut std = Vec::with_capacity(channel_names.len());
        for (m, name) in channel_names.iter().enumerate() {
            let (mut n, mut sum) = (0usize, 0.0);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in columns(m) {
                n += 1;
                sum += v;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if n < 2 {
                return Err(Error::Fit {
                    channel: name.clone(),
                    reason: format!("needs at least 2 values, got {n}"),
                });
            }
            let mu = sum / n as f64;
            let var = columns(m).map(|&v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            // the rounded mean of a constant column is not always the constant
            if lo == hi || !(sd > 0.0) || !sd.is_finite() {
                return Err(Error::Fit {
                    channel: name.clone(),
                    reason: "has zero variance".into(),
                });
            }
            mean.push(mu);
            std.push(sd);
        }
        Ok(Normalizer {
            channel_names,
            mean,
            std,
        })
    }

    pub fn fit_windows<'a>(
        channel_names: Vec<String>,
        windows: impl Iterator<Item = &'a Vec<Vec<f64>>> + Clone,
    ) -> Result<Self> {
        Normalizer::fit_columns(channel_names, |m| {
            windows.clone().flat_map(move |w| w[m].iter())
        })
    }

    pub fn n_channels(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_value(&self, channel: usize, v: f64) -> f64 {
        (v - self.mean[channel]) / self.std[channel]
    }

    pub fn apply_window(&self, window: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if window.len() != self.n_channels() {
            return Err(Error::Schema(format!(
                "window has {} channels, normalizer expects {}",
                window.len(),
                self.n_channels()
            )));
        }
        Ok(window
            .iter()
            .enumerate()
            .map(|(m, row)| row.iter().map(|&v| self.normalize_value(m, v)).collect())
            .collect())
    }
}

/// Fits over the concatenation of every timestep of every training series.
pub fn fit_normalizer(training: &[MultivariateSeries]) -> Result<Normalizer> {
    let first = training
        .first()
        .ok_or_else(|| Error::Fit {
            channel: "*".into(),
            reason: "no training series".into(),
        })?;
    let names = first.channel_names().to_vec();
    for s in training {
        if s.channel_names() != names.as_slice() {
            return Err(Error::Schema(format!(
                "series `{}` channels {:?} differ from {:?}",
                s.entity_id(),
                s.channel_names(),
                names
            )));
        }
    }
    Normalizer::fit_columns(names, |m| training.iter().flat_map(move |s| s.channels()[m].iter()))
}

pub fn apply_normalizer(
    series: &MultivariateSeries,
    normalizer: &Normalizer,
) -> Result<MultivariateSeries> {
    if series.channel_names() != normalizer.channel_names.as_slice() {
        return Err(Error::Schema(format!(
            "series channels {:?} do not match normalizer channels {:?}",
            series.channel_names(),
            normalizer.channel_names
        )));
    }
    let channels = normalizer.apply_window(series.channels())?;
    MultivariateSeries::new(
        series.entity_id(),
        series.timestamps().to_vec(),
        series.channel_names().to_vec(),
        channels,
    )
}

/// Cuts `floor(T / W)` windows at offsets `0, W, 2W, ...`; the trailing
/// remainder shorter than `W` is dropped.
pub fn segment(series: &MultivariateSeries, window_len: usize, label: u8) -> Result<Bag> {
    if window_len < 2 {
        return Err(Error::Config(format!("window length must be >= 2, got {window_len}")));
    }
    let t = series.len();
    if t < window_len {
        return Err(Error::TooShort {
            len: t,
            window: window_len,
        });
    }
    let windows = (0..t / window_len)
        .map(|i| {
            let start = i * window_len;
            series
                .channels()
                .iter()
                .map(|c| c[start..start + window_len].to_vec())
                .collect()
        })
        .collect();
    Bag::from_windows(series.entity_id(), label, windows, None)
}
