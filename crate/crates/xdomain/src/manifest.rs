//! On-disk datasets: a directory of grayscale PNG images plus a manifest.
//!
//! The manifest is `manifest.tsv` in the dataset directory. Lines starting
//! with `#` are comments. Every other line is one sample with six
//! tab-separated fields, in this order:
//!
//! 1. `id`: unique within the directory
//! 2. `path`: image path relative to the dataset directory
//! 3. `label`: `1` (positive) or `0` (negative)
//! 4. `domain`: `source` or `target`
//! 5. `patient`: patient id, or `-` when unknown
//! 6. `split`: `train` or `test`; the same on every line of one manifest
//!
//! Images are 8- or 16-bit grayscale PNGs; intensities are scaled to
//! `[0, 1]`. Written images are always 16-bit.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use xdomain_core::data::{Dataset, Domain, Label, Sample, Split};
use xdomain_core::Tensor;

use crate::error::FormatError;

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const IMAGE_DIR: &str = "images";
const HEADER: &str = "# xdomain manifest v1\n# id\tpath\tlabel\tdomain\tpatient\tsplit\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: String,
    pub path: PathBuf,
    pub label: Label,
    pub domain: Domain,
    pub patient: Option<String>,
    pub split: Split,
}

impl Record {
    fn line(&self) -> String {
        let label = match self.label {
            Label::Positive => "1",
            Label::Negative => "0",
        };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            self.id,
            self.path.display(),
            label,
            self.domain.as_str(),
            self.patient.as_deref().unwrap_or("-"),
            self.split.as_str(),
        )
    }
}

fn parse_line(line: &str) -> Result<Record, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    let [id, path, label, domain, patient, split] = fields[..] else {
        return Err(format!("expected 6 tab-separated fields, found {}", fields.len()));
    };
    if id.is_empty() {
        return Err("empty id".into());
    }
    let label = match label {
        "1" => Label::Positive,
        "0" => Label::Negative,
        other => return Err(format!("label must be 0 or 1, found {other:?}")),
    };
    let domain = match domain {
        "source" => Domain::Source,
        "target" => Domain::Target,
        other => return Err(format!("domain must be source or target, found {other:?}")),
    };
    let split = match split {
        "train" => Split::Train,
        "test" => Split::Test,
        other => return Err(format!("split must be train or test, found {other:?}")),
    };
    let path = PathBuf::from(path);
    if path.as_os_str().is_empty() || path.is_absolute() {
        return Err(format!("image path must be relative, found {path:?}"));
    }
    Ok(Record {
        id: id.to_string(),
        path,
        label,
        domain,
        patient: (patient != "-" && !patient.is_empty()).then(|| patient.to_string()),
        split,
    })
}

pub fn read_manifest(path: &Path) -> Result<Vec<Record>, FormatError> {
    let text = fs::read_to_string(path).map_err(FormatError::io(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
        .map(|(i, l)| {
            parse_line(l).map_err(|msg| FormatError::Line {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            })
        })
        .collect()
}

pub fn render_manifest(records: &[Record]) -> String {
    let mut out = String::from(HEADER);
    for r in records {
        out.push_str(&r.line());
    }
    out
}

fn to_u16(x: f64) -> u16 {
    (x.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// 16-bit grayscale PNG bytes of a `[H, W]` tensor in `[0, 1]`.
pub fn encode_png(pixels: &Tensor) -> Result<Vec<u8>, String> {
    let (h, w) = pixels.dims2().ok_or("expected a 2-D image")?;
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(
        u32::try_from(w).map_err(|_| "image too wide")?,
        u32::try_from(h).map_err(|_| "image too tall")?,
        pixels.data().iter().map(|&x| to_u16(x)).collect(),
    )
    .ok_or("pixel buffer does not match dimensions")?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).map_err(|e| e.to_string())?;
    Ok(out.into_inner())
}

pub fn read_png(path: &Path) -> Result<Tensor, FormatError> {
    let img = image::open(path).map_err(|source| FormatError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        other => {
            return Err(FormatError::invalid(
                path,
                format!("expected a grayscale PNG, found {:?}", other.color()),
            ))
        }
    };
    Ok(Tensor::new(vec![h, w], data)?)
}

/// Writes `data` as `dir/manifest.tsv` plus `dir/images/<id>.png`.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<(), FormatError> {
    let images = dir.join(IMAGE_DIR);
    fs::create_dir_all(&images).map_err(FormatError::io(&images))?;
    let mut records = Vec::with_capacity(data.len());
    for s in data.samples() {
        if s.id.contains(['\t', '\n', '/', '\\']) {
            return Err(FormatError::invalid(dir, format!("sample id {:?} cannot be a file name", s.id)));
        }
        let rel = Path::new(IMAGE_DIR).join(format!("{}.png", s.id));
        let full = dir.join(&rel);
        let png = encode_png(&s.pixels).map_err(|msg| FormatError::invalid(&full, msg))?;
        fs::write(&full, png).map_err(FormatError::io(&full))?;
        records.push(Record {
            id: s.id.clone(),
            path: rel,
            label: s.label,
            domain: s.domain,
            patient: s.patient.clone(),
            split: data.split(),
        });
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, render_manifest(&records)).map_err(FormatError::io(&path))
}

/// Loads the dataset in `dir`. Every manifest line must name the same split.
pub fn read_dataset(dir: &Path) -> Result<Dataset, FormatError> {
    let manifest = dir.join(MANIFEST_FILE);
    let records = read_manifest(&manifest)?;
    let Some(first) = records.first() else {
        return Err(FormatError::invalid(&manifest, "manifest lists no samples"));
    };
    let split = first.split;
    let mut samples = Vec::with_capacity(records.len());
    for r in records {
        if r.split != split {
            return Err(FormatError::invalid(
                &manifest,
                format!("sample {} is in split {}, expected {}", r.id, r.split.as_str(), split.as_str()),
            ));
        }
        let pixels = read_png(&dir.join(&r.path))?;
        samples.push(Sample {
            id: r.id,
            pixels,
            label: r.label,
            domain: r.domain,
            patient: r.patient,
        });
    }
    Dataset::new(samples, split).map_err(|e| FormatError::invalid(&manifest, e.to_string()))
}

/// One-line description of a dataset, e.g. `600 samples (300 positive, 300 negative)`.
pub fn describe(data: &Dataset) -> String {
    format!(
        "{} samples ({} positive, {} negative)",
        data.len(),
        data.count(Label::Positive),
        data.count(Label::Negative)
    )
}
