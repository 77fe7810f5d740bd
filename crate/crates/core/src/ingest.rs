//! AIS CSV ingestion into labeled bags, the planted-shapelet synthetic
//! trajectory generator, the synthetic second-modality generator, and the
//! JSON-lines dataset files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stable_hash, SeededRng};
use crate::series::{derive_kinematics, segment, sin_cos, Bag, MultivariateSeries, AIS_CHANNELS};

// ---------------------------------------------------------------------------
// AIS records

#[derive(Debug, Clone, PartialEq)]
pub struct AisRecord {
    pub mmsi: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
    pub sog: f64,
    pub cog: f64,
    pub vessel_type: Option<i32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RejectReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub by_reason: BTreeMap<String, usize>,
    /// Rejected rows per MMSI, for rows whose MMSI could be read.
    pub by_mmsi: BTreeMap<String, usize>,
}

impl RejectReport {
    pub fn rejected(&self) -> usize {
        self.by_reason.values().sum()
    }

    fn reject(&mut self, reason: impl Into<String>, mmsi: Option<&str>) {
        *self.by_reason.entry(reason.into()).or_default() += 1;
        if let Some(m) = mmsi {
            *self.by_mmsi.entry(m.to_string()).or_default() += 1;
        }
    }
}

const COL_MMSI: &str = "MMSI";
const COL_TIME: &str = "BaseDateTime";
const COL_LAT: &str = "LAT";
const COL_LON: &str = "LON";
const COL_SOG: &str = "SOG";
const COL_COG: &str = "COG";
const COL_TYPE: &str = "VesselType";
const REQUIRED: [&str; 7] = [COL_MMSI, COL_TIME, COL_LAT, COL_LON, COL_SOG, COL_COG, COL_TYPE];

/// Accepts `2017-01-01T00:00:00`, `2017-01-01 00:00:00` and RFC 3339 with an
/// offset. Naive times are taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|dt| dt.and_utc().timestamp())
}

/// Parses an AIS CSV file. Malformed rows are skipped and tallied.
pub fn parse_ais_csv(path: &Path) -> Result<(Vec<AisRecord>, RejectReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ais_reader(file).map_err(|e| match e {
        Error::Parse { detail, .. } => Error::parse(path, detail),
        other => other,
    })
}

pub fn parse_ais_reader<R: Read>(reader: R) -> Result<(Vec<AisRecord>, RejectReport)> {
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::parse("<ais csv>", e))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|c| find(c).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "AIS CSV is missing required column(s): {}",
            missing.join(", ")
        )));
    }
    let idx = |name: &str| find(name).expect("checked above");
    let (i_mmsi, i_time, i_lat, i_lon, i_sog, i_cog, i_type) = (
        idx(COL_MMSI),
        idx(COL_TIME),
        idx(COL_LAT),
        idx(COL_LON),
        idx(COL_SOG),
        idx(COL_COG),
        idx(COL_TYPE),
    );

    let mut records = Vec::new();
    let mut report = RejectReport::default();
    for row in csv.records() {
        report.rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(_) => {
                report.reject("unreadable row", None);
                continue;
            }
        };
        if row.len() != headers.len() {
            report.reject("wrong arity", None);
            continue;
        }
        let mmsi = &row[i_mmsi];
        if mmsi.len() != 9 || !mmsi.bytes().all(|b| b.is_ascii_digit()) {
            report.reject("invalid mmsi", None);
            continue;
        }
        let mmsi_ref = Some(mmsi);
        let Some(timestamp) = parse_timestamp(&row[i_time]) else {
            report.reject("unparseable BaseDateTime", mmsi_ref);
            continue;
        };
        let number = |i: usize| row[i].parse::<f64>().ok().filter(|v| v.is_finite());
        let (Some(lat), Some(lon), Some(sog), Some(cog)) =
            (number(i_lat), number(i_lon), number(i_sog), number(i_cog))
        else {
            report.reject("unparseable number", mmsi_ref);
            continue;
        };
        if !(-90.0..=90.0).contains(&lat) {
            report.reject("lat out of range", mmsi_ref);
            continue;
        }
        if !(-180.0..=180.0).contains(&lon) {
            report.reject("lon out of range", mmsi_ref);
            continue;
        }
        if sog < 0.0 {
            report.reject("sog negative", mmsi_ref);
            continue;
        }
        if !(0.0..360.0).contains(&cog) {
            report.reject("cog out of range", mmsi_ref);
            continue;
        }
        let type_field = &row[i_type];
        let vessel_type = if type_field.is_empty() {
            None
        } else {
            match type_field.parse::<f64>() {
                Ok(v) if v.is_finite() && v.fract() == 0.0 => Some(v as i32),
                _ => {
                    report.reject("unparseable VesselType", mmsi_ref);
                    continue;
                }
            }
        };
        report.rows_accepted += 1;
        records.push(AisRecord {
            mmsi: mmsi.to_string(),
            timestamp,
            lat,
            lon,
            sog,
            cog,
            vessel_type,
        });
    }
    Ok((records, report))
}

// ---------------------------------------------------------------------------
// Tasks and bag construction

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskName {
    Fishing,
    Cargo,
    Tanker,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: TaskName,
    pub positive_type_codes: BTreeSet<i32>,
}

impl TaskSpec {
    pub fn fishing() -> Self {
        TaskSpec {
            name: TaskName::Fishing,
            positive_type_codes: [30].into(),
        }
    }

    pub fn cargo() -> Self {
        TaskSpec {
            name: TaskName::Cargo,
            positive_type_codes: (70..=79).collect(),
        }
    }

    pub fn tanker() -> Self {
        TaskSpec {
            name: TaskName::Tanker,
            positive_type_codes: (80..=89).collect(),
        }
    }

    pub fn custom(codes: impl IntoIterator<Item = i32>) -> Result<Self> {
        let positive_type_codes: BTreeSet<i32> = codes.into_iter().collect();
        if positive_type_codes.is_empty() {
            return Err(Error::Config("custom task needs at least one vessel type code".into()));
        }
        Ok(TaskSpec {
            name: TaskName::Custom,
            positive_type_codes,
        })
    }

    pub fn label(&self, vessel_type: i32) -> u8 {
        u8::from(self.positive_type_codes.contains(&vessel_type))
    }
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec::fishing()
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskName::Fishing => "fishing",
            TaskName::Cargo => "cargo",
            TaskName::Tanker => "tanker",
            TaskName::Custom => "custom",
        })
    }
}

/// `fishing`, `cargo`, `tanker`, or `custom:<code>,<code>,...`.
impl FromStr for TaskSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fishing" => Ok(TaskSpec::fishing()),
            "cargo" => Ok(TaskSpec::cargo()),
            "tanker" => Ok(TaskSpec::tanker()),
            _ => {
                let codes = s
                    .strip_prefix("custom:")
                    .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))?;
                let parsed: std::result::Result<Vec<i32>, _> =
                    codes.split(',').map(|c| c.trim().parse::<i32>()).collect();
                TaskSpec::custom(
                    parsed.map_err(|_| Error::Config(format!("invalid type codes `{codes}`")))?,
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub min_len: usize,
    pub window_len: usize,
    /// Vessels with a larger share of rejected rows are dropped.
    pub max_reject_fraction: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            min_len: 100,
            window_len: 100,
            max_reject_fraction: 0.1,
        }
    }
}

fn canonical_order(a: &AisRecord, b: &AisRecord) -> std::cmp::Ordering {
    a.timestamp
        .cmp(&b.timestamp)
        .then(a.lat.total_cmp(&b.lat))
        .then(a.lon.total_cmp(&b.lon))
        .then(a.sog.total_cmp(&b.sog))
        .then(a.cog.total_cmp(&b.cog))
        .then(a.vessel_type.cmp(&b.vessel_type))
}

/// Most frequent vessel type, smallest code on ties.
fn vessel_type_of(track: &[&AisRecord]) -> Option<i32> {
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for r in track {
        if let Some(t) = r.vessel_type {
            *counts.entry(t).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(t, _)| t)
}

/// Groups records by MMSI into labeled, segmented bags, sorted by entity id.
///
/// Per vessel: records are put in canonical order (timestamp first), repeated
/// timestamps keep only the first record, and the track is dropped when it is
/// shorter than `min_len`, has no vessel type, or lost more than
/// `max_reject_fraction` of its rows during parsing.
pub fn build_bags(
    records: &[AisRecord],
    rejects: &RejectReport,
    task: &TaskSpec,
    options: &BuildOptions,
) -> Result<Vec<Bag>> {
    let mut groups: BTreeMap<&str, Vec<&AisRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.mmsi.as_str()).or_default().push(r);
    }
    let mut bags = Vec::new();
    for (mmsi, mut track) in groups {
        let rejected = rejects.by_mmsi.get(mmsi).copied().unwrap_or(0);
        let seen = rejected + track.len();
        if rejected as f64 > options.max_reject_fraction * seen as f64 {
            continue;
        }
        track.sort_by(|a, b| canonical_order(a, b));
        track.dedup_by(|later, first| later.timestamp == first.timestamp);
        if track.len() < options.min_len || track.len() < options.window_len {
            continue;
        }
        let Some(vessel_type) = vessel_type_of(&track) else {
            continue;
        };
        let series = MultivariateSeries::new(
            mmsi,
            track.iter().map(|r| r.timestamp).collect(),
            AIS_CHANNELS.iter().map(|s| s.to_string()).collect(),
            vec![
                track.iter().map(|r| r.lat).collect(),
                track.iter().map(|r| r.lon).collect(),
                track.iter().map(|r| r.sog).collect(),
                track.iter().map(|r| r.cog).collect(),
            ],
        )?;
        let kinematic = derive_kinematics(&series)?;
        bags.push(segment(&kinematic, options.window_len, task.label(vessel_type))?);
    }
    Ok(bags)
}

// ---------------------------------------------------------------------------
// Synthetic trajectories

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_pos_bags: usize,
    pub n_neg_bags: usize,
    pub series_len_min: usize,
    pub series_len_max: usize,
    pub window_len: usize,
    pub shapelet_len: usize,
    /// knots
    pub cruise_speed_mean: f64,
    pub cruise_speed_std: f64,
    /// degrees per step
    pub cruise_heading_drift_std: f64,
    pub loiter_speed_mean: f64,
    pub loiter_speed_std: f64,
    pub loiter_heading_drift_std: f64,
    /// Observation noise on SOG (knots) and COG (degrees).
    pub noise_std: f64,
    pub sample_interval_s: i64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_pos_bags: 200,
            n_neg_bags: 200,
            series_len_min: 100,
            series_len_max: 200,
            window_len: 25,
            shapelet_len: 25,
            cruise_speed_mean: 10.0,
            cruise_speed_std: 2.0,
            cruise_heading_drift_std: 4.0,
            loiter_speed_mean: 4.0,
            loiter_speed_std: 2.0,
            loiter_heading_drift_std: 30.0,
            noise_std: 1.0,
            sample_interval_s: 60,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.window_len;
        if w < 2 {
            return Err(Error::Config(format!("window_len must be >= 2, got {w}")));
        }
        if self.series_len_min < w {
            return Err(Error::Config(format!(
                "series_len_min {} shorter than window_len {w}",
                self.series_len_min
            )));
        }
        if self.series_len_max < self.series_len_min {
            return Err(Error::Config("series_len_max below series_len_min".into()));
        }
        if self.shapelet_len < w || self.shapelet_len % w != 0 {
            return Err(Error::Config(format!(
                "shapelet_len {} must be a positive multiple of window_len {w}",
                self.shapelet_len
            )));
        }
        if self.shapelet_len > (self.series_len_min / w) * w {
            return Err(Error::Config(format!(
                "shapelet_len {} does not fit in the shortest series ({} steps)",
                self.shapelet_len, self.series_len_min
            )));
        }
        let stds = [
            self.cruise_speed_std,
            self.cruise_heading_drift_std,
            self.loiter_speed_std,
            self.loiter_heading_drift_std,
            self.noise_std,
        ];
        if stds.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config("standard deviations must be finite and >= 0".into()));
        }
        if self.sample_interval_s <= 0 {
            return Err(Error::Config("sample_interval_s must be positive".into()));
        }
        Ok(())
    }
}

/// Nautical miles per degree of latitude.
const NM_PER_DEGREE: f64 = 60.0;
const EPOCH_START: i64 = 1_483_228_800; // 2017-01-01T00:00:00Z

fn synthetic_id(i: usize) -> String {
    format!("{:09}", 900_000_000 + i)
}

/// One synthetic trajectory; `loiter` is the planted step range, if any.
fn synthetic_track(
    config: &SyntheticConfig,
    entity_id: &str,
    positive: bool,
) -> Result<(MultivariateSeries, Option<std::ops::Range<usize>>)> {
    let mut rng = SeededRng::derive(config.seed, entity_id);
    let w = config.window_len;
    let t_len = config.series_len_min + rng.below(config.series_len_max - config.series_len_min + 1);
    let kept = (t_len / w) * w;
    let loiter = positive.then(|| {
        let slots = (kept - config.shapelet_len) / w + 1;
        let start = w * rng.below(slots);
        start..start + config.shapelet_len
    });

    let mut lat = rng.uniform_range(25.0, 45.0);
    let mut lon = rng.uniform_range(-90.0, -65.0);
    let mut heading = rng.uniform_range(0.0, 360.0);
    let dt_hours = config.sample_interval_s as f64 / 3600.0;

    let mut channels = vec![Vec::with_capacity(t_len); 4];
    let mut timestamps = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let loitering = loiter.as_ref().is_some_and(|r| r.contains(&t));
        let (speed_mean, speed_std, drift) = if loitering {
            (config.loiter_speed_mean, config.loiter_speed_std, config.loiter_heading_drift_std)
        } else {
            (config.cruise_speed_mean, config.cruise_speed_std, config.cruise_heading_drift_std)
        };
        if t > 0 {
            heading = (heading + drift * rng.normal()).rem_euclid(360.0);
        }
        let speed = (speed_mean + speed_std * rng.normal()).abs();
        let sog = (speed + config.noise_std * rng.normal()).abs();
        let cog = (heading + config.noise_std * rng.normal()).rem_euclid(360.0);
        // rem_euclid can round up to exactly 360
        let cog = if cog >= 360.0 { 0.0 } else { cog };

        timestamps.push(EPOCH_START + t as i64 * config.sample_interval_s);
        channels[0].push(lat);
        channels[1].push(lon);
        channels[2].push(sog);
        channels[3].push(cog);

        let (sin, cos) = sin_cos(heading.to_radians());
        let dist = speed * dt_hours / NM_PER_DEGREE;
        lat = (lat + dist * cos).clamp(-89.0, 89.0);
        lon += dist * sin / lat.to_radians().cos();
        lon = (lon + 180.0).rem_euclid(360.0) - 180.0;
    }
    let series = MultivariateSeries::new(
        entity_id,
        timestamps,
        AIS_CHANNELS.iter().map(|s| s.to_string()).collect(),
        channels,
    )?;
    Ok((series, loiter))
}

/// Planted-shapelet dataset. Negative bags cruise throughout; positive bags
/// contain one window-aligned loiter segment of `shapelet_len` steps. Every
/// instance overlapping the segment has true label 1. Bags are returned
/// positives first, each bag drawn from its own `(seed, entity_id)` stream.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<Bag>> {
    config.validate()?;
    let w = config.window_len;
    let total = config.n_pos_bags + config.n_neg_bags;
    (0..total)
        .map(|i| {
            let positive = i < config.n_pos_bags;
            let id = synthetic_id(i);
            let (series, loiter) = synthetic_track(config, &id, positive)?;
            let kinematic = derive_kinematics(&series)?;
            let mut bag = segment(&kinematic, w, u8::from(positive))?;
            for inst in &mut bag.instances {
                let span = inst.index * w..(inst.index + 1) * w;
                let hit = loiter
                    .as_ref()
                    .is_some_and(|r| r.start < span.end && span.start < r.end);
                inst.true_label = Some(u8::from(hit));
            }
            Ok(bag)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Second modality

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub entity_id: String,
    pub label: u8,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModalityPairConfig {
    pub feature_dim: usize,
    pub signal_strength: f64,
    pub noise_std: f64,
    pub missing_fraction: f64,
    pub seed: u64,
}

impl Default for ModalityPairConfig {
    fn default() -> Self {
        ModalityPairConfig {
            feature_dim: 8,
            signal_strength: 0.75,
            noise_std: 1.0,
            missing_fraction: 0.0,
            seed: 0,
        }
    }
}

/// Unit vector along which the class means differ.
pub fn signal_direction(feature_dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::derive(seed, "modality-direction");
    loop {
        let v: Vec<f64> = (0..feature_dim).map(|_| rng.normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// One feature vector per bag: `(2y - 1) * s * u + noise`. `round(missing *
/// n)` entities, chosen by the seed, get no record.
pub fn generate_modality_pair(bags: &[Bag], config: &ModalityPairConfig) -> Result<Vec<FeatureRecord>> {
    if config.feature_dim == 0 {
        return Err(Error::Config("feature_dim must be positive".into()));
    }
    if !(0.0..=1.0).contains(&config.missing_fraction) {
        return Err(Error::Config(format!(
            "missing_fraction {} outside [0, 1]",
            config.missing_fraction
        )));
    }
    let direction = signal_direction(config.feature_dim, config.seed);
    let mut order: Vec<usize> = (0..bags.len()).collect();
    SeededRng::derive(config.seed, "modality-missing").shuffle(&mut order);
    let n_missing = (config.missing_fraction * bags.len() as f64).round() as usize;
    let missing: BTreeSet<usize> = order[..n_missing].iter().copied().collect();

    Ok(bags
        .iter()
        .enumerate()
        .filter(|(i, _)| !missing.contains(i))
        .map(|(_, bag)| {
            let mut rng = SeededRng::derive(config.seed, &format!("modality:{}", bag.entity_id));
            let sign = if bag.label == 1 { 1.0 } else { -1.0 };
            let features = direction
                .iter()
                .map(|u| sign * config.signal_strength * u + config.noise_std * rng.normal())
                .collect();
            FeatureRecord {
                entity_id: bag.entity_id.clone(),
                label: bag.label,
                features,
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Splits and files

/// Deterministic 70/30 train/test assignment from the entity id alone.
pub fn is_train(entity_id: &str) -> bool {
    stable_hash(0, entity_id) % 100 < 70
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    All,
}

impl Split {
    pub fn keeps(&self, entity_id: &str) -> bool {
        match self {
            Split::Train => is_train(entity_id),
            Split::Test => !is_train(entity_id),
            Split::All => true,
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            _ => Err(Error::Config(format!("unknown split `{s}` (train|test|all)"))),
        }
    }
}

/// One line of a bag file. `windows[i][m][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagLine {
    pub entity_id: String,
    pub label: u8,
    pub windows: Vec<Vec<Vec<f64>>>,
    pub true_instance_labels: Option<Vec<u8>>,
}

impl From<&Bag> for BagLine {
    fn from(bag: &Bag) -> Self {
        BagLine {
            entity_id: bag.entity_id.clone(),
            label: bag.label,
            windows: bag.instances.iter().map(|i| i.window.clone()).collect(),
            true_instance_labels: bag.true_labels(),
        }
    }
}

impl TryFrom<BagLine> for Bag {
    type Error = Error;

    fn try_from(line: BagLine) -> Result<Bag> {
        Bag::from_windows(line.entity_id, line.label, line.windows, line.true_instance_labels)
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, &item).map_err(|e| Error::parse(path, e))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(items)
}

pub fn write_bags(path: &Path, bags: &[Bag]) -> Result<()> {
    write_jsonl(path, bags.iter().map(BagLine::from))
}

pub fn read_bags(path: &Path) -> Result<Vec<Bag>> {
    read_jsonl::<BagLine>(path)?
        .into_iter()
        .map(Bag::try_from)
        .collect()
}

pub fn write_features(path: &Path, records: &[FeatureRecord]) -> Result<()> {
    write_jsonl(path, records.iter())
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRecord>> {
    read_jsonl(path)
}

/// Either kind of dataset file, told apart by the keys of its first record.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Bags(Vec<Bag>),
    Features(Vec<FeatureRecord>),
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let first = BufReader::new(file)
            .lines()
            .map(|l| l.map_err(|e| Error::io(path, e)))
            .find(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
            .transpose()?;
        let Some(first) = first else {
            return Ok(Dataset::Bags(Vec::new()));
        };
        let value: serde_json::Value =
            serde_json::from_str(&first).map_err(|e| Error::parse(path, format!("line 1: {e}")))?;
        if value.get("features").is_some() {
            Ok(Dataset::Features(read_features(path)?))
        } else {
            Ok(Dataset::Bags(read_bags(path)?))
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Bags(b) => b.len(),
            Dataset::Features(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn filter_split(self, split: Split) -> Self {
        match self {
            Dataset::Bags(b) => {
                Dataset::Bags(b.into_iter().filter(|x| split.keeps(&x.entity_id)).collect())
            }
            Dataset::Features(f) => {
                Dataset::Features(f.into_iter().filter(|x| split.keeps(&x.entity_id)).collect())
            }
        }
    }
}
