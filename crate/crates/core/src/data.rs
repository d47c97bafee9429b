//! Cohort data: CSV ingest, OGTT grid alignment, derived mean streams,
//! split files, and seeded synthetic cohorts.
//!
//! Observations live on a shared 5-minute alignment grid spanning t = -10 to
//! t = 180 minutes (39 positions). A grid slot is filled only by an
//! exact-timepoint match; everything else carries the sentinel `-1` and a
//! `false` mask bit. Neighboring timepoints are never rounded onto the grid.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeedStream;

/// Grid slot count for an aligned OGTT trace.
pub const GRID_LEN: usize = 39;
/// Sentinel value marking an unobserved grid slot (pre-smoothing).
pub const SENTINEL: f64 = -1.0;

/// Grid timepoints in minutes: -10, -5, ..., 180.
pub fn grid_minutes() -> [f64; GRID_LEN] {
    let mut g = [0.0; GRID_LEN];
    for (i, slot) in g.iter_mut().enumerate() {
        *slot = -10.0 + 5.0 * i as f64;
    }
    g
}

/// Acquisition stream for a glucose series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    CtruVenous,
    CtruCgm,
    HomeCgm1,
    HomeCgm2,
    CgmHomeMean,
    CgmAllMean,
    FreeLiving,
}

impl Stream {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stream::CtruVenous => "ctru_venous",
            Stream::CtruCgm => "ctru_cgm",
            Stream::HomeCgm1 => "home_cgm_1",
            Stream::HomeCgm2 => "home_cgm_2",
            Stream::CgmHomeMean => "cgm_home_mean",
            Stream::CgmAllMean => "cgm_all_mean",
            Stream::FreeLiving => "free_living",
        }
    }

    pub fn parse(s: &str) -> Option<Stream> {
        Some(match s {
            "ctru_venous" => Stream::CtruVenous,
            "ctru_cgm" => Stream::CtruCgm,
            "home_cgm_1" => Stream::HomeCgm1,
            "home_cgm_2" => Stream::HomeCgm2,
            "cgm_home_mean" => Stream::CgmHomeMean,
            "cgm_all_mean" => Stream::CgmAllMean,
            "free_living" => Stream::FreeLiving,
            _ => return None,
        })
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Raw per-subject glucose observations for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct GlucoseSeries {
    pub subject_id: String,
    pub stream: Stream,
    /// (timepoint in minutes, glucose in mg/dL), strictly increasing in time.
    pub samples: Vec<(f64, f64)>,
}

/// A series aligned to the 39-slot OGTT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTrace {
    pub subject_id: String,
    pub stream: Stream,
    pub values: [f64; GRID_LEN],
    /// true = real observation at that slot, false = sentinel (pre-smoothing)
    /// or interpolated (post-smoothing).
    pub mask: [bool; GRID_LEN],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Initial,
    Validation,
}

/// Binary endpoint labels for one subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labels {
    pub ir: u8,
    pub beta: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Demographics {
    pub sex: Option<String>,
    pub age_band: Option<String>,
    pub bmi_band: Option<String>,
    pub ethnicity: Option<String>,
}

/// A labeled cohort split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSplit {
    pub name: SplitName,
    pub subjects: Vec<String>,
    pub labels: BTreeMap<String, Labels>,
    #[serde(default)]
    pub demographics: BTreeMap<String, Demographics>,
}

impl CohortSplit {
    pub fn label_of(&self, subject: &str, endpoint: Endpoint) -> Option<u8> {
        self.labels.get(subject).map(|l| match endpoint {
            Endpoint::Ir => l.ir,
            Endpoint::Beta => l.beta,
        })
    }

    /// Check the two-split disjointness invariant.
    pub fn validate_disjoint(&self, other: &CohortSplit) -> Result<(), DataError> {
        for s in &self.subjects {
            if other.subjects.contains(s) {
                return Err(DataError::SplitOverlap(s.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Ir,
    Beta,
}

impl Endpoint {
    pub fn as_str(&self) -> &'static str {
        match self {
            Endpoint::Ir => "ir",
            Endpoint::Beta => "beta",
        }
    }

    pub fn parse(s: &str) -> Option<Endpoint> {
        match s {
            "ir" => Some(Endpoint::Ir),
            "beta" => Some(Endpoint::Beta),
            _ => None,
        }
    }
}

/// Parameters for the synthetic two-class cohort generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_subjects: usize,
    /// Fraction of subjects in class 1.
    pub class_balance: f64,
    /// Free-living days generated per subject (288 samples each).
    pub days_per_subject: usize,
    /// CGM sensor noise, mg/dL.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_subjects: 40,
            class_balance: 0.5,
            days_per_subject: 6,
            noise_sd: 4.0,
            seed: 43,
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("duplicate observation for ({subject}, {stream}) at t={timepoint} (csv line {line})")]
    DuplicateTimepoint {
        subject: String,
        stream: Stream,
        timepoint: f64,
        line: u64,
    },
    #[error("empty series for ({0}, {1})")]
    EmptySeries(String, Stream),
    #[error("mean_stream needs at least one component")]
    NoComponents,
    #[error("mean_stream components span multiple subjects: {0} vs {1}")]
    MixedSubjects(String, String),
    #[error("split file: {0}")]
    BadSplit(String),
    #[error("subject {0} appears in both splits")]
    SplitOverlap(String),
    #[error("invalid synth spec: {0}")]
    BadSynthSpec(String),
}

/// Parse a cohort CSV with header `subject_id,stream,timepoint_min,glucose_mg_dl`.
///
/// Rows are grouped into one series per (subject, stream) in first-appearance
/// order and sorted by timepoint within each series.
pub fn parse_csv(path: &Path) -> Result<Vec<GlucoseSeries>, DataError> {
    let file = std::fs::File::open(path)?;
    parse_csv_reader(file)
}

pub fn parse_csv_reader<R: Read>(reader: R) -> Result<Vec<GlucoseSeries>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr
            .headers()
            .map_err(|e| DataError::Parse { line: 1, msg: e.to_string() })?;
        let expected = ["subject_id", "stream", "timepoint_min", "glucose_mg_dl"];
        if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(DataError::Parse {
                line: 1,
                msg: format!("expected header {:?}, got {:?}", expected.join(","), headers),
            });
        }
    }

    let mut order: Vec<(String, Stream)> = Vec::new();
    let mut groups: BTreeMap<(String, Stream), Vec<(f64, f64)>> = BTreeMap::new();

    for record in rdr.records() {
        let record = record.map_err(|e| DataError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |msg: String| DataError::Parse { line, msg };
        if record.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", record.len())));
        }
        let subject = record[0].to_string();
        if subject.is_empty() {
            return Err(bad("empty subject_id".into()));
        }
        let stream = Stream::parse(&record[1])
            .ok_or_else(|| bad(format!("unknown stream {:?}", &record[1])))?;
        let t: f64 = record[2]
            .parse()
            .map_err(|_| bad(format!("non-numeric timepoint_min {:?}", &record[2])))?;
        let g: f64 = record[3]
            .parse()
            .map_err(|_| bad(format!("non-numeric glucose_mg_dl {:?}", &record[3])))?;
        if !t.is_finite() {
            return Err(bad(format!("non-finite timepoint {t}")));
        }
        if !g.is_finite() || g <= 0.0 {
            return Err(bad(format!("glucose must be finite and > 0, got {g}")));
        }
        let key = (subject, stream);
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Vec::new()
        });
        if entry.iter().any(|&(tt, _)| tt == t) {
            return Err(DataError::DuplicateTimepoint {
                subject: key.0,
                stream,
                timepoint: t,
                line,
            });
        }
        entry.push((t, g));
    }

    Ok(order
        .into_iter()
        .map(|key| {
            let mut samples = groups.remove(&key).unwrap();
            samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            GlucoseSeries { subject_id: key.0, stream: key.1, samples }
        })
        .collect())
}

/// Write series back out in the cohort CSV format.
pub fn write_csv<W: std::io::Write>(w: W, series: &[GlucoseSeries]) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["subject_id", "stream", "timepoint_min", "glucose_mg_dl"])
        .map_err(|e| DataError::Parse { line: 0, msg: e.to_string() })?;
    for s in series {
        for &(t, g) in &s.samples {
            wtr.write_record([
                s.subject_id.as_str(),
                s.stream.as_str(),
                &t.to_string(),
                &g.to_string(),
            ])
            .map_err(|e| DataError::Parse { line: 0, msg: e.to_string() })?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Align a series to the 39-slot grid by exact-timepoint match.
///
/// Returns the trace plus the count of observations that fell outside the
/// grid and were dropped.
pub fn align_to_grid(series: &GlucoseSeries) -> Result<(AlignedTrace, usize), DataError> {
    if series.samples.is_empty() {
        return Err(DataError::EmptySeries(series.subject_id.clone(), series.stream));
    }
    let grid = grid_minutes();
    let mut values = [SENTINEL; GRID_LEN];
    let mut mask = [false; GRID_LEN];
    let mut dropped = 0usize;
    for &(t, g) in &series.samples {
        match grid.iter().position(|&gt| gt == t) {
            Some(slot) => {
                values[slot] = g;
                mask[slot] = true;
            }
            None => dropped += 1,
        }
    }
    Ok((
        AlignedTrace {
            subject_id: series.subject_id.clone(),
            stream: series.stream,
            values,
            mask,
        },
        dropped,
    ))
}

/// Pointwise mean over components, per grid slot, skipping components that
/// are missing at that slot. The result is real wherever at least one
/// component is.
pub fn mean_stream(components: &[AlignedTrace], target: Stream) -> Result<AlignedTrace, DataError> {
    let first = components.first().ok_or(DataError::NoComponents)?;
    for c in components {
        if c.subject_id != first.subject_id {
            return Err(DataError::MixedSubjects(
                first.subject_id.clone(),
                c.subject_id.clone(),
            ));
        }
    }
    let mut values = [SENTINEL; GRID_LEN];
    let mut mask = [false; GRID_LEN];
    for slot in 0..GRID_LEN {
        let mut sum = 0.0;
        let mut n = 0usize;
        for c in components {
            if c.mask[slot] {
                sum += c.values[slot];
                n += 1;
            }
        }
        if n > 0 {
            values[slot] = sum / n as f64;
            mask[slot] = true;
        }
    }
    Ok(AlignedTrace {
        subject_id: first.subject_id.clone(),
        stream: target,
        values,
        mask,
    })
}

/// Load and validate a split file (JSON with keys `name`, `subjects`,
/// `labels`, optional `demographics`).
pub fn load_split(path: &Path) -> Result<CohortSplit, DataError> {
    let text = std::fs::read_to_string(path)?;
    parse_split(&text)
}

pub fn parse_split(text: &str) -> Result<CohortSplit, DataError> {
    let split: CohortSplit =
        serde_json::from_str(text).map_err(|e| DataError::BadSplit(e.to_string()))?;
    if split.subjects.is_empty() {
        return Err(DataError::BadSplit("empty subjects list".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in &split.subjects {
        if !seen.insert(s.clone()) {
            return Err(DataError::BadSplit(format!("subject {s} listed twice")));
        }
        if !split.labels.contains_key(s) {
            return Err(DataError::BadSplit(format!("subject {s} has no labels")));
        }
    }
    for (s, l) in &split.labels {
        if !seen.contains(s) {
            return Err(DataError::BadSplit(format!("labels for unknown subject {s}")));
        }
        if l.ir > 1 || l.beta > 1 {
            return Err(DataError::BadSplit(format!("labels for {s} must be 0/1")));
        }
    }
    Ok(split)
}

pub fn write_split(path: &Path, split: &CohortSplit) -> Result<(), DataError> {
    let text =
        serde_json::to_string_pretty(split).map_err(|e| DataError::BadSplit(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

// Synthetic cohort kinetics. Class 0 peaks early and clears fast; class 1
// peaks late, higher, and clears slowly. Constants are plumbing for
// desk-scale runs, not clinical claims.
const CLASS0_PEAK_MIN: f64 = 45.0;
const CLASS0_AMP: f64 = 70.0;
const CLASS0_SHAPE: f64 = 2.4;
const CLASS1_PEAK_MIN: f64 = 75.0;
const CLASS1_AMP: f64 = 95.0;
const CLASS1_SHAPE: f64 = 1.5;
const VENOUS_TIMEPOINTS: [f64; 9] = [-10.0, 0.0, 15.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0];

/// Post-load glucose excursion: peaks at `peak_min` with height `amp`;
/// `shape` controls rise/clearance steepness. Zero before the load.
fn excursion(t_min: f64, peak_min: f64, amp: f64, shape: f64) -> f64 {
    if t_min <= 0.0 {
        return 0.0;
    }
    let r = t_min / peak_min;
    amp * (r * (1.0 - r).exp()).powf(shape)
}

struct SubjectProfile {
    class: u8,
    baseline: f64,
    peak_min: f64,
    amp: f64,
    shape: f64,
    /// Amplitude nuisance shared across all of the subject's responses.
    amp_scale: f64,
}

fn subject_profile(rng: &mut SeedStream, class: u8) -> SubjectProfile {
    let (peak0, amp0, shape0, psd, asd, ssd) = if class == 0 {
        (CLASS0_PEAK_MIN, CLASS0_AMP, CLASS0_SHAPE, 5.0, 8.0, 0.20)
    } else {
        (CLASS1_PEAK_MIN, CLASS1_AMP, CLASS1_SHAPE, 6.0, 10.0, 0.15)
    };
    SubjectProfile {
        class,
        baseline: rng.uniform(80.0, 100.0),
        peak_min: rng.gaussian_scaled(peak0, psd).clamp(peak0 - 15.0, peak0 + 15.0),
        amp: rng.gaussian_scaled(amp0, asd).clamp(amp0 - 25.0, amp0 + 25.0),
        shape: rng.gaussian_scaled(shape0, ssd).clamp(shape0 - 0.5, shape0 + 0.5),
        amp_scale: rng.uniform(0.85, 1.2),
    }
}

/// Generate a deterministic synthetic cohort: venous + CGM OGTT-style traces
/// and free-living day streams per subject, plus a labeled split.
///
/// Per-subject randomness comes from an independent ChaCha8 stream keyed by
/// the subject index, so output is invariant to evaluation order and
/// platform.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(Vec<GlucoseSeries>, CohortSplit), DataError> {
    if spec.n_subjects < 2 {
        return Err(DataError::BadSynthSpec(format!(
            "n_subjects must be >= 2, got {}",
            spec.n_subjects
        )));
    }
    if !(spec.class_balance > 0.0 && spec.class_balance < 1.0) {
        return Err(DataError::BadSynthSpec(format!(
            "class_balance must be in (0,1), got {}",
            spec.class_balance
        )));
    }
    let n1 = (spec.class_balance * spec.n_subjects as f64).round() as usize;

    let mut series = Vec::new();
    let mut subjects = Vec::new();
    let mut labels = BTreeMap::new();
    let mut demographics = BTreeMap::new();

    for i in 0..spec.n_subjects {
        let id = format!("S{i:03}");
        let class: u8 = if i < n1 { 1 } else { 0 };
        let mut rng = SeedStream::new(spec.seed, 1000 + i as u64);
        let prof = subject_profile(&mut rng, class);

        // OGTT response at continuous time, shared by all OGTT-style streams.
        let resp = |t: f64, sess_scale: f64, sess_shift: f64| -> f64 {
            prof.baseline
                + prof.amp_scale
                    * sess_scale
                    * excursion(t - sess_shift, prof.peak_min, prof.amp, prof.shape)
        };

        // ctru_venous: sparse clinical draws, low noise.
        let venous: Vec<(f64, f64)> = VENOUS_TIMEPOINTS
            .iter()
            .map(|&t| {
                let eps = rng.gaussian_scaled(0.0, 0.25 * spec.noise_sd);
                (t, (resp(t, 1.0, 0.0) + eps).max(40.0))
            })
            .collect();
        series.push(GlucoseSeries {
            subject_id: id.clone(),
            stream: Stream::CtruVenous,
            samples: venous,
        });

        // CGM during the OGTT: dense 5-minute sampling, sensor noise.
        let grid = grid_minutes();
        for (stream, sess) in [
            (Stream::CtruCgm, 0u64),
            (Stream::HomeCgm1, 1),
            (Stream::HomeCgm2, 2),
        ] {
            let sess_scale = if sess == 0 { 1.0 } else { rng.uniform(0.92, 1.08) };
            let sess_shift = if sess == 0 { 0.0 } else { rng.gaussian_scaled(0.0, 4.0) };
            let samples: Vec<(f64, f64)> = grid
                .iter()
                .map(|&t| {
                    let eps = rng.gaussian_scaled(0.0, spec.noise_sd);
                    (t, (resp(t, sess_scale, sess_shift) + eps).max(40.0))
                })
                .collect();
            series.push(GlucoseSeries { subject_id: id.clone(), stream, samples });
        }

        // Free-living days: circadian baseline + 3 meal excursions + noise,
        // meals following the subject's class kinetics.
        let mut fl = Vec::with_capacity(spec.days_per_subject * 288);
        for day in 0..spec.days_per_subject {
            let meal_hours = [
                7.5 + rng.uniform(-0.75, 0.75),
                12.5 + rng.uniform(-0.75, 0.75),
                18.5 + rng.uniform(-0.75, 0.75),
            ];
            let meal_scales = [
                rng.uniform(0.5, 0.9),
                rng.uniform(0.5, 0.9),
                rng.uniform(0.5, 0.9),
            ];
            for j in 0..288 {
                let minute_of_day = 5.0 * j as f64;
                let hour = minute_of_day / 60.0;
                let circadian = 4.0 * (2.0 * std::f64::consts::PI * (hour - 7.0) / 24.0).sin();
                let mut v = prof.baseline + circadian;
                for (mh, ms) in meal_hours.iter().zip(meal_scales) {
                    let since = minute_of_day - mh * 60.0;
                    v += prof.amp_scale * ms * excursion(since, prof.peak_min, prof.amp, prof.shape);
                }
                v += rng.gaussian_scaled(0.0, spec.noise_sd);
                let t = (day * 288) as f64 * 5.0 + minute_of_day;
                fl.push((t, v.max(40.0)));
            }
        }
        series.push(GlucoseSeries {
            subject_id: id.clone(),
            stream: Stream::FreeLiving,
            samples: fl,
        });

        // Labels from class-conditional distributions, then demographics.
        let ir_p = if class == 1 { 0.95 } else { 0.05 };
        let beta_p = if class == 1 { 0.88 } else { 0.12 };
        let ir = u8::from(rng.next_f64() < ir_p);
        let beta = u8::from(rng.next_f64() < beta_p);
        labels.insert(id.clone(), Labels { ir, beta });

        let pick = |rng: &mut SeedStream, opts: &[(&str, f64)]| -> String {
            let u = rng.next_f64();
            let mut acc = 0.0;
            for (name, p) in opts {
                acc += p;
                if u < acc {
                    return (*name).to_string();
                }
            }
            opts.last().unwrap().0.to_string()
        };
        demographics.insert(
            id.clone(),
            Demographics {
                sex: Some(pick(&mut rng, &[("F", 0.55), ("M", 0.45)])),
                age_band: Some(pick(
                    &mut rng,
                    &[("40-49", 0.30), ("50-59", 0.45), ("60-69", 0.25)],
                )),
                bmi_band: Some(pick(
                    &mut rng,
                    &[("18.5-24.9", 0.40), ("25-29.9", 0.40), ("30+", 0.20)],
                )),
                ethnicity: Some(pick(
                    &mut rng,
                    &[("Asian", 0.35), ("Caucasian", 0.50), ("Hispanic", 0.15)],
                )),
            },
        );
        subjects.push(id);
    }

    let split = CohortSplit {
        name: SplitName::Validation,
        subjects,
        labels,
        demographics,
    };
    Ok((series, split))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_trace(subject: &str, stream: Stream, slots: &[(usize, f64)]) -> AlignedTrace {
        let mut values = [SENTINEL; GRID_LEN];
        let mut mask = [false; GRID_LEN];
        for &(i, v) in slots {
            values[i] = v;
            mask[i] = true;
        }
        AlignedTrace { subject_id: subject.into(), stream, values, mask }
    }

    #[test]
    fn parse_groups_one_series() {
        let csv = "subject_id,stream,timepoint_min,glucose_mg_dl\n\
                   A,ctru_venous,0,100\nA,ctru_venous,30,150\nA,ctru_venous,15,120\n";
        let out = parse_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].samples, vec![(0.0, 100.0), (15.0, 120.0), (30.0, 150.0)]);
    }

    #[test]
    fn parse_groups_two_subjects_two_streams() {
        let csv = "subject_id,stream,timepoint_min,glucose_mg_dl\n\
                   A,ctru_venous,0,100\nA,ctru_cgm,0,101\nB,ctru_venous,0,90\nB,ctru_cgm,0,92\n";
        let out = parse_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn parse_rejects_non_numeric_glucose_with_line() {
        let csv = "subject_id,stream,timepoint_min,glucose_mg_dl\n\
                   A,ctru_venous,0,100\nA,ctru_venous,5,oops\n";
        let err = parse_csv_reader(csv.as_bytes()).unwrap_err();
        match err {
            DataError::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("glucose"), "{msg}");
            }
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_duplicate_timepoint() {
        let csv = "subject_id,stream,timepoint_min,glucose_mg_dl\n\
                   A,ctru_venous,0,100\nA,ctru_venous,0,101\n";
        assert!(matches!(
            parse_csv_reader(csv.as_bytes()),
            Err(DataError::DuplicateTimepoint { .. })
        ));
    }

    #[test]
    fn align_places_venous_draws() {
        let series = GlucoseSeries {
            subject_id: "A".into(),
            stream: Stream::CtruVenous,
            samples: VENOUS_TIMEPOINTS.iter().map(|&t| (t, 100.0 + t)).collect(),
        };
        let (trace, dropped) = align_to_grid(&series).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(trace.mask.iter().filter(|&&m| m).count(), 9);
        assert_eq!(trace.values.iter().filter(|&&v| v == SENTINEL).count(), 30);
        // t=60 is slot (60 + 10) / 5 = 14
        assert_eq!(trace.values[14], 160.0);
    }

    #[test]
    fn align_full_cgm_has_no_sentinels() {
        let grid = grid_minutes();
        let series = GlucoseSeries {
            subject_id: "A".into(),
            stream: Stream::CtruCgm,
            samples: grid.iter().map(|&t| (t, 100.0)).collect(),
        };
        let (trace, dropped) = align_to_grid(&series).unwrap();
        assert_eq!(dropped, 0);
        assert!(trace.mask.iter().all(|&m| m));
    }

    #[test]
    fn align_drops_off_grid_observation() {
        let series = GlucoseSeries {
            subject_id: "A".into(),
            stream: Stream::CtruVenous,
            samples: vec![(0.0, 100.0), (17.0, 118.0), (30.0, 140.0)],
        };
        let (trace, dropped) = align_to_grid(&series).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(trace.mask.iter().filter(|&&m| m).count(), 2);
    }

    #[test]
    fn align_idempotent_on_grid_aligned_series() {
        let grid = grid_minutes();
        let series = GlucoseSeries {
            subject_id: "A".into(),
            stream: Stream::CtruCgm,
            samples: grid.iter().enumerate().map(|(i, &t)| (t, 90.0 + i as f64)).collect(),
        };
        let (t1, _) = align_to_grid(&series).unwrap();
        let back = GlucoseSeries {
            subject_id: t1.subject_id.clone(),
            stream: t1.stream,
            samples: grid
                .iter()
                .zip(t1.values)
                .filter(|_| true)
                .map(|(&t, v)| (t, v))
                .collect(),
        };
        let (t2, dropped) = align_to_grid(&back).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(t1, t2);
    }

    #[test]
    fn sentinel_count_invariant() {
        let series = GlucoseSeries {
            subject_id: "A".into(),
            stream: Stream::CtruVenous,
            samples: vec![(0.0, 100.0), (60.0, 160.0)],
        };
        let (trace, _) = align_to_grid(&series).unwrap();
        let real = trace.mask.iter().filter(|&&m| m).count();
        let sentinels = trace.values.iter().filter(|&&v| v == SENTINEL).count();
        assert_eq!(real + sentinels, GRID_LEN);
    }

    #[test]
    fn mean_of_two_traces() {
        let a = toy_trace("A", Stream::HomeCgm1, &[(0, 100.0), (5, 110.0)]);
        let b = toy_trace("A", Stream::HomeCgm2, &[(0, 120.0)]);
        let m = mean_stream(&[a, b], Stream::CgmHomeMean).unwrap();
        assert_eq!(m.values[0], 110.0);
        // slot 5 present in only one component: mean over that one.
        assert_eq!(m.values[5], 110.0);
        assert!(m.mask[5]);
        assert!(!m.mask[7]);
    }

    #[test]
    fn mean_single_component_is_identity() {
        let a = toy_trace("A", Stream::HomeCgm1, &[(0, 100.0), (38, 90.0)]);
        let m = mean_stream(std::slice::from_ref(&a), Stream::CgmHomeMean).unwrap();
        assert_eq!(m.values, a.values);
        assert_eq!(m.mask, a.mask);
    }

    #[test]
    fn mean_commutes_with_reordering() {
        let a = toy_trace("A", Stream::HomeCgm1, &[(0, 100.0), (1, 105.0)]);
        let b = toy_trace("A", Stream::HomeCgm2, &[(0, 120.0), (2, 98.0)]);
        let m1 = mean_stream(&[a.clone(), b.clone()], Stream::CgmHomeMean).unwrap();
        let m2 = mean_stream(&[b, a], Stream::CgmHomeMean).unwrap();
        assert_eq!(m1.values, m2.values);
    }

    #[test]
    fn mean_rejects_empty_and_mixed() {
        assert!(matches!(mean_stream(&[], Stream::CgmHomeMean), Err(DataError::NoComponents)));
        let a = toy_trace("A", Stream::HomeCgm1, &[(0, 1.0)]);
        let b = toy_trace("B", Stream::HomeCgm2, &[(0, 1.0)]);
        assert!(mean_stream(&[a, b], Stream::CgmHomeMean).is_err());
    }

    #[test]
    fn split_roundtrip_and_validation() {
        let json = r#"{
            "name": "initial",
            "subjects": ["A", "B"],
            "labels": {"A": {"ir": 0, "beta": 1}, "B": {"ir": 1, "beta": 0}},
            "demographics": {"A": {"sex": "F"}}
        }"#;
        let split = parse_split(json).unwrap();
        assert_eq!(split.subjects.len(), 2);
        assert_eq!(split.label_of("A", Endpoint::Beta), Some(1));

        // missing label
        let bad = r#"{"name":"initial","subjects":["A"],"labels":{}}"#;
        assert!(parse_split(bad).is_err());
        // unknown label key
        let bad = r#"{"name":"initial","subjects":["A"],"labels":{"A":{"ir":0,"beta":1,"x":2}}}"#;
        assert!(parse_split(bad).is_err());
        // empty subjects
        let bad = r#"{"name":"initial","subjects":[],"labels":{}}"#;
        assert!(parse_split(bad).is_err());
    }

    #[test]
    fn split_disjointness() {
        let a = parse_split(
            r#"{"name":"initial","subjects":["A"],"labels":{"A":{"ir":0,"beta":0}}}"#,
        )
        .unwrap();
        let b = parse_split(
            r#"{"name":"validation","subjects":["A"],"labels":{"A":{"ir":0,"beta":0}}}"#,
        )
        .unwrap();
        assert!(matches!(a.validate_disjoint(&b), Err(DataError::SplitOverlap(_))));
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec { n_subjects: 4, days_per_subject: 1, ..Default::default() };
        let (s1, c1) = generate_synthetic(&spec).unwrap();
        let (s2, c2) = generate_synthetic(&spec).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(c1, c2);
    }

    #[test]
    fn synth_respects_class_balance() {
        let spec = SynthSpec { n_subjects: 40, days_per_subject: 1, ..Default::default() };
        let (_, split) = generate_synthetic(&spec).unwrap();
        assert_eq!(split.subjects.len(), 40);
        // class is the latent; check via label prevalence being near-balanced
        let n_ir: u32 = split.labels.values().map(|l| l.ir as u32).sum();
        assert!((10..=30).contains(&n_ir), "ir prevalence {n_ir}");
    }

    #[test]
    fn synth_zero_noise_is_smooth() {
        let spec = SynthSpec {
            n_subjects: 2,
            days_per_subject: 1,
            noise_sd: 0.0,
            ..Default::default()
        };
        let (series, _) = generate_synthetic(&spec).unwrap();
        let venous = series.iter().find(|s| s.stream == Stream::CtruVenous).unwrap();
        // Fasting draws at t=-10 and t=0 equal the baseline exactly.
        assert_eq!(venous.samples[0].1, venous.samples[1].1);
    }

    #[test]
    fn synth_streams_complete_per_subject() {
        let spec = SynthSpec { n_subjects: 3, days_per_subject: 2, ..Default::default() };
        let (series, split) = generate_synthetic(&spec).unwrap();
        for id in &split.subjects {
            for stream in [
                Stream::CtruVenous,
                Stream::CtruCgm,
                Stream::HomeCgm1,
                Stream::HomeCgm2,
                Stream::FreeLiving,
            ] {
                let s = series
                    .iter()
                    .find(|s| &s.subject_id == id && s.stream == stream)
                    .unwrap_or_else(|| panic!("missing {stream} for {id}"));
                if stream == Stream::FreeLiving {
                    assert_eq!(s.samples.len(), 2 * 288);
                }
            }
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let spec = SynthSpec { n_subjects: 2, days_per_subject: 1, ..Default::default() };
        let (series, _) = generate_synthetic(&spec).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &series).unwrap();
        let back = parse_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(series, back);
    }
}
