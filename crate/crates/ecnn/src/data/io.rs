//! Epoch container on disk: a directory with a text `manifest` and a flat
//! little-endian f64 `payload` of shape [N x C x T], row-major.

use super::DataError;
use crate::epoch::{Epoch, EpochSet, Label};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

const HEADER: &str = "ecnn-epochs v1";

fn parse_label(s: &str) -> Option<Label> {
    match s {
        "alert" => Some(Label::Alert),
        "fatigue" => Some(Label::Fatigue),
        "unlabeled" => Some(Label::Unlabeled),
        _ => None,
    }
}

pub fn save_epochs(set: &EpochSet, dir: &Path) -> Result<(), DataError> {
    let (c, t, rate) = set.shape().ok_or(DataError::EmptySet)?;
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    manifest.push_str(HEADER);
    manifest.push('\n');
    manifest.push_str(&format!("channels={c}\n"));
    manifest.push_str(&format!("samples={t}\n"));
    manifest.push_str(&format!("rate={rate}\n"));
    manifest.push_str(&format!("count={}\n", set.len()));
    for (i, e) in set.epochs().iter().enumerate() {
        manifest.push_str(&format!(
            "epoch_{i}={},{},{},{}\n",
            e.subject_id,
            e.label.name(),
            e.channels(),
            e.samples()
        ));
    }
    fs::write(dir.join("manifest"), manifest)?;
    let mut payload = BufWriter::new(fs::File::create(dir.join("payload"))?);
    for e in set.epochs() {
        for v in e.data() {
            payload.write_all(&v.to_le_bytes())?;
        }
    }
    payload.flush()?;
    Ok(())
}

pub fn load_epochs(dir: &Path) -> Result<EpochSet, DataError> {
    let text = fs::read_to_string(dir.join("manifest"))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DataError::Format {
        line: 1,
        message: "empty manifest".into(),
    })?;
    if header != HEADER {
        return Err(DataError::Format {
            line: 1,
            message: format!("expected header '{HEADER}', got '{header}'"),
        });
    }
    let mut channels = None;
    let mut samples = None;
    let mut rate = None;
    let mut count = None;
    let mut epoch_meta: Vec<(u32, Label, usize, usize)> = Vec::new();
    for (lineno, line) in lines {
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let (key, value) = text.split_once('=').ok_or_else(|| DataError::Format {
            line: lineno + 1,
            message: "expected key=value".into(),
        })?;
        let bad = |what: &str| DataError::Format {
            line: lineno + 1,
            message: format!("unparseable {what}"),
        };
        match key {
            "channels" => channels = Some(value.parse().map_err(|_| bad("channels"))?),
            "samples" => samples = Some(value.parse().map_err(|_| bad("samples"))?),
            "rate" => rate = Some(value.parse().map_err(|_| bad("rate"))?),
            "count" => count = Some(value.parse().map_err(|_| bad("count"))?),
            k if k.starts_with("epoch_") => {
                let index: usize = k["epoch_".len()..].parse().map_err(|_| bad("epoch index"))?;
                if index != epoch_meta.len() {
                    return Err(DataError::Format {
                        line: lineno + 1,
                        message: format!("epoch lines out of order at index {index}"),
                    });
                }
                let fields: Vec<&str> = value.split(',').collect();
                if fields.len() != 4 {
                    return Err(bad("epoch line"));
                }
                let subject: u32 = fields[0].parse().map_err(|_| bad("subject"))?;
                let label = parse_label(fields[1]).ok_or_else(|| bad("label"))?;
                let ec: usize = fields[2].parse().map_err(|_| bad("epoch channels"))?;
                let et: usize = fields[3].parse().map_err(|_| bad("epoch samples"))?;
                epoch_meta.push((subject, label, ec, et));
            }
            _ => {
                return Err(DataError::Format {
                    line: lineno + 1,
                    message: format!("unknown key '{key}'"),
                })
            }
        }
    }
    let missing = |what: &str| DataError::Format {
        line: 0,
        message: format!("missing '{what}' line"),
    };
    let channels: usize = channels.ok_or_else(|| missing("channels"))?;
    let samples: usize = samples.ok_or_else(|| missing("samples"))?;
    let rate: f64 = rate.ok_or_else(|| missing("rate"))?;
    let count: usize = count.ok_or_else(|| missing("count"))?;
    if epoch_meta.len() != count {
        return Err(DataError::Format {
            line: 0,
            message: format!("count={} but {} epoch lines", count, epoch_meta.len()),
        });
    }
    for (i, &(_, _, ec, et)) in epoch_meta.iter().enumerate() {
        if ec != channels || et != samples {
            return Err(DataError::Shape {
                epoch_index: i,
                message: format!(
                    "epoch shape {ec}x{et} does not match container shape {channels}x{samples}"
                ),
            });
        }
    }

    let mut payload = fs::File::open(dir.join("payload"))?;
    let stride = channels * samples;
    let mut set = EpochSet::new();
    let mut buf = vec![0u8; stride * 8];
    for (i, &(subject, label, _, _)) in epoch_meta.iter().enumerate() {
        payload.read_exact(&mut buf).map_err(|_| DataError::Shape {
            epoch_index: i,
            message: "payload truncated".into(),
        })?;
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        set.push(Epoch::new(data, channels, samples, rate, subject, label)?)?;
    }
    let mut extra = [0u8; 1];
    if payload.read(&mut extra)? != 0 {
        return Err(DataError::Format {
            line: 0,
            message: "payload longer than manifest count".into(),
        });
    }
    Ok(set)
}
