//! On-disk containers and CSV import.
//!
//! Two self-describing little-endian binary formats, documented in
//! `docs/FORMATS.md`:
//!
//! * `.eegrec` (magic `EEGREC\0\0`): continuous recording.
//! * `.eegep`  (magic `EEGEPOC\0`): epoch set.
//!
//! Round-trips are bit-exact: samples are stored as raw IEEE-754 f64, so
//! `load(save(x)) == x` down to NaN payloads. Malformed input reports the
//! byte offset where the problem was detected.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use ndarray::{Array2, Array3};

use super::{EpochSet, Event, Recording};
use crate::error::{Error, Result};

const REC_MAGIC: &[u8; 8] = b"EEGREC\0\0";
const EP_MAGIC: &[u8; 8] = b"EEGEPOC\0";
const FORMAT_VERSION: u32 = 1;

/// Cap on declared counts so a corrupt header cannot trigger a huge
/// allocation: 5e8 f64 samples is 4 GB.
const MAX_ELEMENTS: u64 = 500_000_000;

pub(crate) struct Reader<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> Reader<R> {
    pub(crate) fn new(inner: R) -> Self {
        Reader { inner, pos: 0 }
    }

    pub(crate) fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    pub(crate) fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| Error::Format {
            offset: self.pos,
            msg: format!("unexpected end of file ({e})"),
        })?;
        self.pos += buf.len() as u64;
        Ok(())
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        let mut b = [0u8; 2];
        self.read_exact(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let mut buf = vec![0u8; len];
        self.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| self.fail("invalid UTF-8 in string"))
    }

    /// Bulk-read `n` f64 values.
    pub(crate) fn f64_block(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0f64; n];
        self.inner
            .read_f64_into::<LE>(&mut out)
            .map_err(|e| Error::Format {
                offset: self.pos,
                msg: format!("unexpected end of file in sample block ({e})"),
            })?;
        self.pos += (n as u64) * 8;
        Ok(out)
    }

    pub(crate) fn check_magic(&mut self, magic: &[u8; 8], what: &str) -> Result<()> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b)?;
        if &b != magic {
            self.pos = 0;
            return Err(self.fail(format!("not a {what} file (bad magic)")));
        }
        Ok(())
    }

    pub(crate) fn check_version(&mut self) -> Result<()> {
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(Error::Version {
                found: v,
                expected: FORMAT_VERSION,
            });
        }
        Ok(())
    }

    pub(crate) fn check_count(&self, n: u64, what: &str) -> Result<u64> {
        if n > MAX_ELEMENTS {
            return Err(self.fail(format!("implausible {what} count {n}")));
        }
        Ok(n)
    }

    pub(crate) fn expect_eof(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(self.fail("trailing bytes after declared content")),
            Err(e) => Err(Error::Io(e)),
        }
    }
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!(
            "string too long for container: {} bytes",
            bytes.len()
        )));
    }
    w.write_u16::<LE>(bytes.len() as u16)?;
    w.write_all(bytes)?;
    Ok(())
}

fn write_f64_block<W: Write>(w: &mut W, data: &[f64]) -> Result<()> {
    for &v in data {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

/// Write a continuous recording to `path` in the `.eegrec` container.
pub fn save_recording(rec: &Recording, path: &Path) -> Result<()> {
    rec.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(REC_MAGIC)?;
    w.write_u32::<LE>(FORMAT_VERSION)?;
    w.write_u32::<LE>(rec.subject_id)?;
    w.write_f64::<LE>(rec.rate_hz)?;
    w.write_u32::<LE>(rec.channels.len() as u32)?;
    w.write_u64::<LE>(rec.n_samples() as u64)?;
    w.write_u32::<LE>(rec.events.len() as u32)?;
    w.write_u32::<LE>(rec.class_values_cpd.len() as u32)?;
    for c in &rec.channels {
        write_string(&mut w, c)?;
    }
    for &v in &rec.class_values_cpd {
        w.write_f64::<LE>(v)?;
    }
    for e in &rec.events {
        w.write_u64::<LE>(e.sample_index)?;
        w.write_u32::<LE>(e.label)?;
    }
    let row_major = rec.samples.as_standard_layout();
    write_f64_block(&mut w, row_major.as_slice().unwrap())?;
    w.flush()?;
    Ok(())
}

/// Read a `.eegrec` file.
pub fn load_recording(path: &Path) -> Result<Recording> {
    let mut r = Reader::new(BufReader::new(File::open(path)?));
    r.check_magic(REC_MAGIC, "recording")?;
    r.check_version()?;
    let subject_id = r.u32()?;
    let rate_hz = r.f64()?;
    if !(rate_hz > 0.0) || !rate_hz.is_finite() {
        return Err(r.fail(format!("invalid sample rate {rate_hz}")));
    }
    let raw = r.u32()? as u64;
    let n_channels = r.check_count(raw, "channel")? as usize;
    let raw = r.u64()?;
    let n_samples = r.check_count(raw, "sample")? as usize;
    r.check_count((n_channels as u64).saturating_mul(n_samples as u64), "total sample")?;
    let raw = r.u32()? as u64;
    let n_events = r.check_count(raw, "event")? as usize;
    let raw = r.u32()? as u64;
    let n_classes = r.check_count(raw, "class")? as usize;
    let mut channels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        channels.push(r.string()?);
    }
    let mut class_values_cpd = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        class_values_cpd.push(r.f64()?);
    }
    let mut events = Vec::with_capacity(n_events);
    for _ in 0..n_events {
        events.push(Event {
            sample_index: r.u64()?,
            label: r.u32()?,
        });
    }
    let data = r.f64_block(n_channels * n_samples)?;
    r.expect_eof()?;
    let samples = Array2::from_shape_vec((n_channels, n_samples), data)
        .map_err(|e| r.fail(format!("sample block does not match header: {e}")))?;
    let rec = Recording {
        subject_id,
        rate_hz,
        channels,
        samples,
        events,
        class_values_cpd,
    };
    rec.validate().map_err(|e| Error::Format {
        offset: r.pos,
        msg: format!("invariant violated: {e}"),
    })?;
    Ok(rec)
}

/// Write an epoch set to `path` in the `.eegep` container.
pub fn save_epochs(es: &EpochSet, path: &Path) -> Result<()> {
    es.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(EP_MAGIC)?;
    w.write_u32::<LE>(FORMAT_VERSION)?;
    w.write_u32::<LE>(es.subject_id)?;
    w.write_f64::<LE>(es.rate_hz)?;
    w.write_f64::<LE>(es.window_ms.0)?;
    w.write_f64::<LE>(es.window_ms.1)?;
    w.write_u32::<LE>(es.class_values_cpd.len() as u32)?;
    w.write_u32::<LE>(es.channels.len() as u32)?;
    w.write_u64::<LE>(es.n_trials() as u64)?;
    w.write_u64::<LE>(es.n_time() as u64)?;
    for &v in &es.class_values_cpd {
        w.write_f64::<LE>(v)?;
    }
    for c in &es.channels {
        write_string(&mut w, c)?;
    }
    for &l in &es.labels {
        w.write_u32::<LE>(l)?;
    }
    let row_major = es.epochs.as_standard_layout();
    write_f64_block(&mut w, row_major.as_slice().unwrap())?;
    w.flush()?;
    Ok(())
}

/// Read a `.eegep` file.
pub fn load_epochs(path: &Path) -> Result<EpochSet> {
    let mut r = Reader::new(BufReader::new(File::open(path)?));
    r.check_magic(EP_MAGIC, "epoch set")?;
    r.check_version()?;
    let subject_id = r.u32()?;
    let rate_hz = r.f64()?;
    let window_ms = (r.f64()?, r.f64()?);
    let raw = r.u32()? as u64;
    let n_classes = r.check_count(raw, "class")? as usize;
    let raw = r.u32()? as u64;
    let n_channels = r.check_count(raw, "channel")? as usize;
    let raw = r.u64()?;
    let n_trials = r.check_count(raw, "trial")? as usize;
    let raw = r.u64()?;
    let n_time = r.check_count(raw, "time")? as usize;
    let total = (n_trials as u64)
        .saturating_mul(n_channels as u64)
        .saturating_mul(n_time as u64);
    r.check_count(total, "total sample")?;
    let mut class_values_cpd = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        class_values_cpd.push(r.f64()?);
    }
    let mut channels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        channels.push(r.string()?);
    }
    let mut labels = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        labels.push(r.u32()?);
    }
    let data = r.f64_block(total as usize)?;
    r.expect_eof()?;
    let epochs = Array3::from_shape_vec((n_trials, n_channels, n_time), data)
        .map_err(|e| r.fail(format!("epoch block does not match header: {e}")))?;
    let es = EpochSet {
        subject_id,
        rate_hz,
        channels,
        epochs,
        labels,
        window_ms,
        class_values_cpd,
    };
    es.validate().map_err(|e| Error::Format {
        offset: r.pos,
        msg: format!("invariant violated: {e}"),
    })?;
    Ok(es)
}

/// Import a plain-text recording: first row = channel labels, one column
/// per channel, one row per sample. Events come from an optional sidecar
/// of `sample_index,label` lines (a non-numeric first line is skipped as
/// a header).
pub fn load_recording_csv(
    csv_path: &Path,
    events_path: Option<&Path>,
    rate_hz: f64,
    subject_id: u32,
) -> Result<Recording> {
    let text = std::fs::read_to_string(csv_path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format {
            offset: 0,
            msg: "empty CSV file".into(),
        })?;
    let channels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let n_channels = channels.len();
    let mut data: Vec<f64> = Vec::new();
    let mut n_rows = 0usize;
    let mut offset = header.len() as u64 + 1;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            offset += line.len() as u64 + 1;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_channels {
            return Err(Error::Format {
                offset,
                msg: format!(
                    "line {}: {} fields, expected {}",
                    lineno + 1,
                    fields.len(),
                    n_channels
                ),
            });
        }
        for f in &fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::Format {
                offset,
                msg: format!("line {}: not a number: {f:?}", lineno + 1),
            })?;
            data.push(v);
        }
        n_rows += 1;
        offset += line.len() as u64 + 1;
    }
    // CSV rows are time-major; transpose to channel × time.
    let time_major = Array2::from_shape_vec((n_rows, n_channels), data).expect("csv shape");
    let samples = time_major.t().as_standard_layout().into_owned();

    let mut events = Vec::new();
    if let Some(ep) = events_path {
        let etext = std::fs::read_to_string(ep)?;
        for (lineno, line) in etext.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let a = parts.next().unwrap_or("").trim();
            let b = parts.next().unwrap_or("").trim();
            if lineno == 0 && a.parse::<u64>().is_err() {
                continue; // header line
            }
            let sample_index: u64 = a.parse().map_err(|_| Error::Format {
                offset: 0,
                msg: format!("events line {}: bad sample index {a:?}", lineno + 1),
            })?;
            let label: u32 = b.parse().map_err(|_| Error::Format {
                offset: 0,
                msg: format!("events line {}: bad label {b:?}", lineno + 1),
            })?;
            events.push(Event {
                sample_index,
                label,
            });
        }
    }
    let rec = Recording {
        subject_id,
        rate_hz,
        channels,
        samples,
        events,
        class_values_cpd: super::DEFAULT_CLASS_VALUES_CPD.to_vec(),
    };
    rec.validate()?;
    Ok(rec)
}
