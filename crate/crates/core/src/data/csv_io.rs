use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{DatasetSplits, LabelSet, LabeledSample, Split, IMAGE_SIZE, PIXELS};

pub const CSV_HEADER: [&str; 3] = ["emotion", "pixels", "Usage"];

fn parse_row(record: &csv::StringRecord, row: usize, labels: LabelSet) -> Result<LabeledSample> {
    let err = |message: String| Error::Parse { row, message };
    if record.len() != 3 {
        return Err(err(format!("expected 3 fields, found {}", record.len())));
    }
    let label: usize = record[0]
        .trim()
        .parse()
        .map_err(|_| err(format!("label {:?} is not an integer", &record[0])))?;
    if label >= labels.num_classes() {
        return Err(err(format!(
            "label {label} out of range 0..{}",
            labels.num_classes() - 1
        )));
    }
    let mut pixels = Vec::with_capacity(PIXELS);
    for tok in record[1].split_ascii_whitespace() {
        let v: u8 = tok
            .parse()
            .map_err(|_| err(format!("pixel {tok:?} is not an integer in 0..=255")))?;
        pixels.push(v as f32 / 255.0);
    }
    if pixels.len() != PIXELS {
        return Err(err(format!("expected {PIXELS} pixels, found {}", pixels.len())));
    }
    let split = Split::from_usage_tag(record[2].trim())
        .ok_or_else(|| err(format!("unknown Usage tag {:?}", &record[2])))?;
    Ok(LabeledSample {
        image: Tensor::new(&[IMAGE_SIZE, IMAGE_SIZE], pixels)?,
        label,
        split,
    })
}

/// Reads an `emotion,pixels,Usage` file. Pixels are reshaped row-major to
/// 48x48 and scaled to `[0, 1]`; rows are routed by their `Usage` tag.
/// Parse errors carry the 1-based line number of the offending row.
pub fn load_csv(path: impl AsRef<Path>, labels: LabelSet) -> Result<DatasetSplits> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let header = reader.headers().map_err(|e| Error::Parse {
        row: 1,
        message: e.to_string(),
    })?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != CSV_HEADER {
        return Err(Error::Parse {
            row: 1,
            message: format!("header must be emotion,pixels,Usage, found {}", names.join(",")),
        });
    }
    let mut splits = DatasetSplits::default();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map(|p| p.line() as usize).unwrap_or(i + 2),
            message: e.to_string(),
        })?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(i + 2);
        let sample = parse_row(&record, row, labels)?;
        match sample.split {
            Split::Train => splits.train.push(sample),
            Split::PublicTest => splits.public_test.push(sample),
            Split::PrivateTest => splits.private_test.push(sample),
        }
    }
    Ok(splits)
}

/// FER-2013 (seven classes).
pub fn load_fer_csv(path: impl AsRef<Path>) -> Result<DatasetSplits> {
    load_csv(path, LabelSet::Fer)
}

/// Writes samples in the loader's schema. Intensities are rounded back to
/// 0-255 integers, so images that came from a file round-trip exactly.
pub fn write_csv<'a>(path: impl AsRef<Path>, samples: impl IntoIterator<Item = &'a LabeledSample>) -> Result<()> {
    let path = path.as_ref();
    let io = |e: std::io::Error| Error::io(path, e);
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{}", CSV_HEADER.join(",")).map_err(io)?;
    let mut line = String::new();
    for s in samples {
        line.clear();
        line.push_str(&s.label.to_string());
        line.push(',');
        for (i, v) in s.image.data().iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            let px = (v * 255.0).round().clamp(0.0, 255.0) as u8;
            line.push_str(&px.to_string());
        }
        line.push(',');
        line.push_str(s.split.usage_tag());
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn row(label: &str, n: usize, usage: &str) -> String {
        format!("{label},{},{usage}\n", vec!["0"; n].join(" "))
    }

    #[test]
    fn one_row_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.csv");
        fs::write(&p, format!("emotion,pixels,Usage\n{}", row("3", 2304, "Training"))).unwrap();
        let d = load_fer_csv(&p).unwrap();
        assert_eq!(d.sizes(), (1, 0, 0));
        assert_eq!(d.train[0].label, 3);
        assert_eq!(d.train[0].image.shape(), &[48, 48]);
        assert!(d.train[0].image.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_row_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        let body = format!(
            "emotion,pixels,Usage\n{}{}",
            row("0", 2304, "Training"),
            row("1", 2303, "PublicTest")
        );
        fs::write(&p, body).unwrap();
        match load_fer_csv(&p) {
            Err(Error::Parse { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("2303"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn label_range_depends_on_label_set() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("six.csv");
        fs::write(&p, format!("emotion,pixels,Usage\n{}", row("6", 2304, "Training"))).unwrap();
        assert!(load_fer_csv(&p).is_ok());
        assert!(matches!(load_csv(&p, LabelSet::CkPlus), Err(Error::Parse { row: 2, .. })));
        fs::write(&p, format!("emotion,pixels,Usage\n{}", row("7", 2304, "Training"))).unwrap();
        assert!(load_fer_csv(&p).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_fer_csv("/nonexistent/fer.csv"), Err(Error::Io { .. })));
    }

    #[test]
    fn bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        fs::write(&p, format!("a,b,c\n{}", row("0", 2304, "Training"))).unwrap();
        assert!(matches!(load_fer_csv(&p), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.csv");
        let samples: Vec<LabeledSample> = (0..3)
            .map(|i| LabeledSample {
                image: Tensor::from_fn(&[48, 48], |j| ((i * 31 + j) % 256) as f32 / 255.0),
                label: i,
                split: [Split::Train, Split::PublicTest, Split::PrivateTest][i],
            })
            .collect();
        write_csv(&p, &samples).unwrap();
        let d = load_fer_csv(&p).unwrap();
        assert_eq!(d.all().cloned().collect::<Vec<_>>(), samples);
    }
}
