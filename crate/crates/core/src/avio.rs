//! Activation-vector datasets and their on-disk formats.
//!
//! Binary dataset layout (all integers little-endian):
//!
//! ```text
//! "AVEC" | u32 version=1 | u32 N | u32 C | u32 count | u8 partition
//! count × ( i32 label | C×N f32, channel-major )
//! ```
//!
//! The CSV layout is a header `label,c0_v0,c0_v1,...` followed by one sample
//! per row. An optional first line `# partition: <name>` carries the
//! partition; without it the partition is inferred from the labels.
//!
//! Fitted models use a separate binary layout, see [`save_model`].

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evt::WeibullModel;
use crate::mav::{ClassModel, Metric, MetricConfig};
use crate::openmax::{OpenMaxModel, SkippedClass};

/// Ground-truth label of an open-set (unseen category) sample.
pub const OPEN_SET_LABEL: i32 = -1;
/// Ground-truth label of a fooling sample.
pub const FOOLING_LABEL: i32 = -2;

const DATASET_MAGIC: &[u8; 4] = b"AVEC";
const DATASET_VERSION: u32 = 1;
const DATASET_HEADER_LEN: usize = 4 + 4 * 4 + 1;

const MODEL_MAGIC: &[u8; 4] = b"OMAX";
const MODEL_VERSION: u32 = 1;

/// Which evaluation role a dataset plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Validation,
    OpenSet,
    Fooling,
}

impl Partition {
    pub fn tag(self) -> u8 {
        match self {
            Partition::Train => 0,
            Partition::Validation => 1,
            Partition::OpenSet => 2,
            Partition::Fooling => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Partition::Train,
            1 => Partition::Validation,
            2 => Partition::OpenSet,
            3 => Partition::Fooling,
            t => return Err(Error::Format(format!("unknown partition tag {t}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::OpenSet => "openset",
            Partition::Fooling => "fooling",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Partition::Train),
            "validation" => Ok(Partition::Validation),
            "openset" => Ok(Partition::OpenSet),
            "fooling" => Ok(Partition::Fooling),
            other => Err(Error::Format(format!("unknown partition '{other}'"))),
        }
    }
}

/// On-disk encoding of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Binary,
    Csv,
}

impl DataFormat {
    /// Picks CSV for `.csv` paths and binary for everything else.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Binary,
        }
    }
}

/// One labeled activation vector: `n_channels` rows of `n_classes` scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSample {
    pub label: i32,
    pub n_channels: usize,
    pub n_classes: usize,
    /// Channel-major `C × N` scores.
    pub values: Vec<f32>,
}

impl ActivationSample {
    pub fn new(label: i32, n_channels: usize, n_classes: usize, values: Vec<f32>) -> Result<Self> {
        let sample = ActivationSample {
            label,
            n_channels,
            n_classes,
            values,
        };
        sample.validate()?;
        Ok(sample)
    }

    /// Builds a sample from per-channel rows, narrowing to `f32`.
    pub fn from_channels(label: i32, channels: &[Vec<f64>]) -> Result<Self> {
        let n_channels = channels.len();
        let n_classes = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != n_classes) {
            return Err(Error::Dimension("channels have unequal lengths".into()));
        }
        let values = channels.iter().flatten().map(|&v| v as f32).collect();
        Self::new(label, n_channels, n_classes, values)
    }

    /// Single-channel convenience constructor.
    pub fn single(label: i32, scores: &[f64]) -> Result<Self> {
        Self::from_channels(label, &[scores.to_vec()])
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels < 1 {
            return Err(Error::Dimension(
                "a sample needs at least one channel".into(),
            ));
        }
        if self.n_classes < 2 {
            return Err(Error::Dimension(format!(
                "a sample needs at least two classes, got {}",
                self.n_classes
            )));
        }
        if self.values.len() != self.n_channels * self.n_classes {
            return Err(Error::Dimension(format!(
                "expected {}×{} activations, got {}",
                self.n_channels,
                self.n_classes,
                self.values.len()
            )));
        }
        if !(self.label == OPEN_SET_LABEL
            || self.label == FOOLING_LABEL
            || (self.label >= 0 && (self.label as usize) < self.n_classes))
        {
            return Err(Error::Data(format!(
                "label {} outside {{-2, -1}} ∪ [0, {})",
                self.label, self.n_classes
            )));
        }
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite activation {} at channel {}, class {}",
                self.values[pos],
                pos / self.n_classes,
                pos % self.n_classes
            )));
        }
        Ok(())
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.values[c * self.n_classes..(c + 1) * self.n_classes]
    }

    pub fn channel_f64(&self, c: usize) -> Vec<f64> {
        self.channel(c).iter().map(|&v| v as f64).collect()
    }

    /// Per-class mean of the activations across channels.
    pub fn channel_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n_classes];
        for c in 0..self.n_channels {
            for (m, &v) in mean.iter_mut().zip(self.channel(c)) {
                *m += v as f64;
            }
        }
        let inv = 1.0 / self.n_channels as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        mean
    }

    /// Whether the ground truth is a known class.
    pub fn is_known(&self) -> bool {
        self.label >= 0
    }
}

/// An ordered, dimension-consistent collection of samples for one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_classes: usize,
    pub n_channels: usize,
    pub partition: Partition,
    pub samples: Vec<ActivationSample>,
}

impl Dataset {
    pub fn new(
        n_classes: usize,
        n_channels: usize,
        partition: Partition,
        samples: Vec<ActivationSample>,
    ) -> Result<Self> {
        let dataset = Dataset {
            n_classes,
            n_channels,
            partition,
            samples,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels < 1 || self.n_classes < 2 {
            return Err(Error::Dimension(format!(
                "dataset needs C ≥ 1 and N ≥ 2, got C={} N={}",
                self.n_channels, self.n_classes
            )));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.n_classes != self.n_classes || s.n_channels != self.n_channels {
                return Err(Error::Dimension(format!(
                    "sample {i} is {}×{}, dataset is {}×{}",
                    s.n_channels, s.n_classes, self.n_channels, self.n_classes
                )));
            }
            s.validate()
                .map_err(|e| prefix_error(e, &format!("sample {i}")))?;
            if self.partition == Partition::Train && !s.is_known() {
                return Err(Error::Data(format!(
                    "sample {i}: train partition holds label {}",
                    s.label
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<i32> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Concatenates datasets of equal shape. The partition of the result is
    /// taken from the first input.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyDataset("nothing to concatenate".into()))?;
        let mut samples = Vec::with_capacity(parts.iter().map(|d| d.len()).sum());
        for d in parts {
            if d.n_classes != first.n_classes || d.n_channels != first.n_channels {
                return Err(Error::Dimension(
                    "cannot concatenate datasets of different shape".into(),
                ));
            }
            samples.extend(d.samples.iter().cloned());
        }
        Ok(Dataset {
            n_classes: first.n_classes,
            n_channels: first.n_channels,
            partition: first.partition,
            samples,
        })
    }
}

fn prefix_error(e: Error, prefix: &str) -> Error {
    match e {
        Error::Data(m) => Error::Data(format!("{prefix}: {m}")),
        Error::Dimension(m) => Error::Dimension(format!("{prefix}: {m}")),
        other => other,
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let path = path.as_ref();
    match format {
        DataFormat::Binary => decode_dataset(&fs::read(path)?),
        DataFormat::Csv => decode_dataset_csv(&fs::read_to_string(path)?),
    }
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
    let bytes = match format {
        DataFormat::Binary => encode_dataset(dataset)?,
        DataFormat::Csv => encode_dataset_csv(dataset)?.into_bytes(),
    };
    fs::write(path, bytes)?;
    Ok(())
}

fn to_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::Dimension(format!("{what} {value} exceeds u32")))
}

pub fn encode_dataset(dataset: &Dataset) -> Result<Vec<u8>> {
    dataset.validate()?;
    let stride = 4 + 4 * dataset.n_channels * dataset.n_classes;
    let mut out = Vec::with_capacity(DATASET_HEADER_LEN + stride * dataset.len());
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(dataset.n_classes, "N")?.to_le_bytes());
    out.extend_from_slice(&to_u32(dataset.n_channels, "C")?.to_le_bytes());
    out.extend_from_slice(&to_u32(dataset.len(), "sample count")?.to_le_bytes());
    out.push(dataset.partition.tag());
    for s in &dataset.samples {
        out.extend_from_slice(&s.label.to_le_bytes());
        for v in &s.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != DATASET_MAGIC {
        return Err(Error::Format("bad magic, expected AVEC".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {version}"
        )));
    }
    let n_classes = r.u32()? as usize;
    let n_channels = r.u32()? as usize;
    let count = r.u32()? as usize;
    let partition = Partition::from_tag(r.u8()?)?;

    let width = n_channels * n_classes;
    let stride = 4 + 4 * width;
    let payload = r.remaining();
    if payload.len() != stride * count {
        let held = payload.len() / stride;
        return Err(Error::Dimension(format!(
            "header claims {count} samples of {n_channels}×{n_classes}, payload holds {held} ({} bytes)",
            payload.len()
        )));
    }
    let mut samples = Vec::with_capacity(count);
    for record in payload.chunks_exact(stride) {
        let label = i32::from_le_bytes(record[..4].try_into().unwrap());
        let values = record[4..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        samples.push(ActivationSample {
            label,
            n_channels,
            n_classes,
            values,
        });
    }
    Dataset::new(n_classes, n_channels, partition, samples)
}

pub fn encode_dataset_csv(dataset: &Dataset) -> Result<String> {
    dataset.validate()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = Vec::with_capacity(1 + dataset.n_channels * dataset.n_classes);
    header.push("label".to_string());
    for c in 0..dataset.n_channels {
        for j in 0..dataset.n_classes {
            header.push(format!("c{c}_v{j}"));
        }
    }
    w.write_record(&header).map_err(csv_error)?;
    for s in &dataset.samples {
        let mut row = Vec::with_capacity(header.len());
        row.push(s.label.to_string());
        // Shortest round-trip representation: at most 9 significant digits for f32.
        row.extend(s.values.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_error)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .expect("csv output is utf-8");
    Ok(format!("# partition: {}\n{body}", dataset.partition))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn parse_column_name(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix('c')?;
    let (c, j) = rest.split_once("_v")?;
    Some((c.parse().ok()?, j.parse().ok()?))
}

pub fn decode_dataset_csv(text: &str) -> Result<Dataset> {
    let mut partition = None;
    let mut body = text;
    if let Some(first) = text.lines().next() {
        if let Some(comment) = first.strip_prefix('#') {
            let value = comment
                .trim()
                .strip_prefix("partition:")
                .ok_or_else(|| Error::Format(format!("unrecognised comment line '{first}'")))?;
            partition = Some(value.parse::<Partition>()?);
            body = text[first.len()..].trim_start_matches(['\r', '\n']);
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.get(0) != Some("label") {
        return Err(Error::Format("first CSV column must be 'label'".into()));
    }
    let columns: Vec<(usize, usize)> = header
        .iter()
        .skip(1)
        .map(|h| {
            parse_column_name(h).ok_or_else(|| Error::Format(format!("bad column name '{h}'")))
        })
        .collect::<Result<_>>()?;
    let n_channels = columns.iter().map(|&(c, _)| c + 1).max().unwrap_or(0);
    let n_classes = columns.iter().map(|&(_, j)| j + 1).max().unwrap_or(0);
    let in_order = columns
        .iter()
        .enumerate()
        .all(|(k, &(c, j))| n_classes > 0 && c == k / n_classes && j == k % n_classes);
    if columns.len() != n_channels * n_classes || !in_order {
        return Err(Error::Format(
            "CSV columns must be c{c}_v{j} in channel-major order".into(),
        ));
    }

    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => {
                Error::Dimension(format!("row {row}: column count differs from header"))
            }
            _ => csv_error(e),
        })?;
        let label: i32 = record[0]
            .parse()
            .map_err(|_| Error::Format(format!("row {row}: bad label '{}'", &record[0])))?;
        let values = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f32>()
                    .map_err(|_| Error::Format(format!("row {row}: bad number '{f}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(ActivationSample {
            label,
            n_channels,
            n_classes,
            values,
        });
    }

    let partition = partition.unwrap_or_else(|| infer_partition(&samples));
    Dataset::new(n_classes, n_channels, partition, samples)
}

fn infer_partition(samples: &[ActivationSample]) -> Partition {
    if !samples.is_empty() && samples.iter().all(|s| s.label == FOOLING_LABEL) {
        Partition::Fooling
    } else if !samples.is_empty() && samples.iter().all(|s| s.label == OPEN_SET_LABEL) {
        Partition::OpenSet
    } else if samples.iter().all(ActivationSample::is_known) {
        Partition::Train
    } else {
        Partition::Validation
    }
}

/// Writes a fitted model.
///
/// ```text
/// "OMAX" | u32 version=1 | u32 N | u32 C | u32 eta | u8 metric | f64 eucos_weight
/// u32 n_models | u32 n_skipped | n_skipped × (u32 class | u32 reason_len | utf-8 reason)
/// n_models × ( u32 class | u32 n_support | C×N f64 mav | C × (f64 tau, f64 kappa, f64 lambda) )
/// ```
pub fn save_model(model: &OpenMaxModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<OpenMaxModel> {
    decode_model(&fs::read(path)?)
}

pub fn encode_model(model: &OpenMaxModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(model.n_classes, "N")?.to_le_bytes());
    out.extend_from_slice(&to_u32(model.n_channels, "C")?.to_le_bytes());
    out.extend_from_slice(&to_u32(model.eta, "eta")?.to_le_bytes());
    out.push(model.metric.metric.tag());
    out.extend_from_slice(&model.metric.eucos_weight.to_le_bytes());
    out.extend_from_slice(&to_u32(model.class_models.len(), "model count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(model.skipped.len(), "skip count")?.to_le_bytes());
    for skip in &model.skipped {
        out.extend_from_slice(&to_u32(skip.class_id, "class id")?.to_le_bytes());
        out.extend_from_slice(&to_u32(skip.reason.len(), "reason length")?.to_le_bytes());
        out.extend_from_slice(skip.reason.as_bytes());
    }
    for cm in &model.class_models {
        if cm.mav.len() != model.n_channels || cm.weibull.len() != model.n_channels {
            return Err(Error::Dimension(format!(
                "class {} model does not have {} channels",
                cm.class_id, model.n_channels
            )));
        }
        out.extend_from_slice(&to_u32(cm.class_id, "class id")?.to_le_bytes());
        out.extend_from_slice(&to_u32(cm.n_support, "support")?.to_le_bytes());
        for row in &cm.mav {
            if row.len() != model.n_classes {
                return Err(Error::Dimension(format!(
                    "class {} MAV has wrong width",
                    cm.class_id
                )));
            }
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for w in &cm.weibull {
            for v in [w.tau, w.kappa, w.lambda] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<OpenMaxModel> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::Format("bad magic, expected OMAX".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported model version {version}"
        )));
    }
    let n_classes = r.u32()? as usize;
    let n_channels = r.u32()? as usize;
    let eta = r.u32()? as usize;
    let metric = Metric::from_tag(r.u8()?)?;
    let eucos_weight = r.f64()?;
    let n_models = r.u32()? as usize;
    let n_skipped = r.u32()? as usize;

    let mut skipped = Vec::with_capacity(n_skipped.min(bytes.len()));
    for _ in 0..n_skipped {
        let class_id = r.u32()? as usize;
        let len = r.u32()? as usize;
        let reason = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("skip reason is not utf-8".into()))?
            .to_string();
        skipped.push(SkippedClass { class_id, reason });
    }

    let mut class_models = Vec::with_capacity(n_models.min(bytes.len()));
    for _ in 0..n_models {
        let class_id = r.u32()? as usize;
        let n_support = r.u32()? as usize;
        let mut mav = Vec::with_capacity(n_channels);
        for _ in 0..n_channels {
            let row = (0..n_classes)
                .map(|_| r.f64())
                .collect::<Result<Vec<_>>>()?;
            mav.push(row);
        }
        let mut weibull = Vec::with_capacity(n_channels);
        for _ in 0..n_channels {
            weibull.push(WeibullModel {
                tau: r.f64()?,
                kappa: r.f64()?,
                lambda: r.f64()?,
            });
        }
        class_models.push(ClassModel {
            class_id,
            mav,
            weibull,
            n_support,
        });
    }
    if !r.remaining().is_empty() {
        return Err(Error::Format(format!(
            "{} trailing bytes after model payload",
            r.remaining().len()
        )));
    }
    OpenMaxModel::from_parts(
        class_models,
        skipped,
        MetricConfig::new(metric, eucos_weight)?,
        eta,
        n_classes,
        n_channels,
    )
    .map_err(|e| Error::Format(format!("inconsistent model file: {e}")))
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated input: wanted {n} bytes at offset {}, have {}",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}
