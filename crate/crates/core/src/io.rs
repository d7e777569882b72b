//! File formats.
//!
//! * hierarchy: nested JSON `{"name": .., "children": [..]}`, leaves omit `children`
//! * probabilities: CSV with one column per class, matched to leaves by header name
//! * labels: one class name per line
//! * predictions: JSON lines `{"classes": [..], "nodes": [..], "size": n, "repr_complexity": n}`

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conformal::Prediction;
use crate::error::{Error, Result};
use crate::hierarchy::{ClassId, Hierarchy};
use crate::probmodel::ProbabilityView;

fn file_error(path: &Path, source: std::io::Error) -> Error {
    Error::File {
        path: path.display().to_string(),
        source,
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| file_error(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| file_error(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| file_error(path, e))
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| file_error(path, e))
}

pub fn read_hierarchy(path: &Path) -> Result<Hierarchy> {
    Hierarchy::from_json(&read_to_string(path)?)
}

pub fn read_probabilities(path: &Path, h: &Hierarchy) -> Result<Vec<ProbabilityView>> {
    parse_probabilities(open(path)?, h, &path.display().to_string())
}

/// Parses a probability table. `origin` labels error messages.
pub fn parse_probabilities<R: Read>(
    reader: R,
    h: &Hierarchy,
    origin: &str,
) -> Result<Vec<ProbabilityView>> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = csv.headers()?.clone();
    let k = h.num_classes();
    let mut column_class = Vec::with_capacity(header.len());
    let mut seen = vec![false; k];
    for name in header.iter() {
        let c = h.class_id(name).ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: 1,
            reason: format!("column `{name}` is not a leaf of the hierarchy"),
        })?;
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: 1,
                reason: format!("column `{name}` appears twice"),
            });
        }
        column_class.push(c);
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: 1,
            reason: format!("no column for class `{}`", h.class_name(c)),
        });
    }

    let mut views = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let mut mass = vec![0.0; k];
        for (field, &c) in record.iter().zip(&column_class) {
            mass[c] = field.parse::<f64>().map_err(|_| Error::Parse {
                path: origin.to_string(),
                line,
                reason: format!("`{field}` is not a number"),
            })?;
        }
        let view = ProbabilityView::new(mass).map_err(|e| match e {
            Error::Distribution(reason) => {
                Error::Distribution(format!("{origin}, line {line}: {reason}"))
            }
            other => other,
        })?;
        views.push(view);
    }
    if views.is_empty() {
        return Err(Error::Empty("probability table"));
    }
    Ok(views)
}

/// Writes a probability table with columns in class order.
pub fn write_probabilities<W: Write>(
    writer: W,
    h: &Hierarchy,
    views: &[ProbabilityView],
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(h.class_names())?;
    for view in views {
        csv.write_record(view.masses().iter().map(|m| m.to_string()))?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path, h: &Hierarchy) -> Result<Vec<ClassId>> {
    parse_labels(open(path)?, h, &path.display().to_string())
}

/// One class name per line; blank lines are skipped.
pub fn parse_labels<R: BufRead>(reader: R, h: &Hierarchy, origin: &str) -> Result<Vec<ClassId>> {
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let name = line.trim();
        if name.is_empty() {
            continue;
        }
        let c = h.class_id(name).ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            reason: format!("unknown class name `{name}`"),
        })?;
        labels.push(c);
    }
    Ok(labels)
}

pub fn write_labels<W: Write>(mut writer: W, h: &Hierarchy, labels: &[ClassId]) -> Result<()> {
    for &c in labels {
        h.check_class(c)?;
        writeln!(writer, "{}", h.class_name(c))?;
    }
    writer.flush()?;
    Ok(())
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub classes: Vec<String>,
    pub nodes: Vec<String>,
    pub size: usize,
    pub repr_complexity: usize,
}

impl PredictionRecord {
    pub fn new(h: &Hierarchy, p: &Prediction) -> Self {
        PredictionRecord {
            classes: p
                .classes
                .iter()
                .map(|&c| h.class_name(c).to_string())
                .collect(),
            nodes: p.cover.iter().map(|v| h.node_name(v).to_string()).collect(),
            size: p.size,
            repr_complexity: p.complexity,
        }
    }

    /// Class ids, sorted and deduplicated.
    pub fn class_ids(&self, h: &Hierarchy) -> Result<Vec<ClassId>> {
        let mut ids = self
            .classes
            .iter()
            .map(|n| h.class_id(n).ok_or_else(|| Error::UnknownClass(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        ids.sort_unstable();
        ids.dedup();
        Ok(ids)
    }
}

pub fn write_predictions<W: Write>(
    mut writer: W,
    h: &Hierarchy,
    predictions: &[Prediction],
) -> Result<()> {
    for p in predictions {
        serde_json::to_writer(&mut writer, &PredictionRecord::new(h, p))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path, h: &Hierarchy) -> Result<Vec<Vec<ClassId>>> {
    parse_predictions(open(path)?, h, &path.display().to_string())
}

/// Reads the class sets of a predictions file; the other fields are ignored.
pub fn parse_predictions<R: BufRead>(
    reader: R,
    h: &Hierarchy,
    origin: &str,
) -> Result<Vec<Vec<ClassId>>> {
    let mut sets = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_error = |reason: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            reason,
        };
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| parse_error(e.to_string()))?;
        sets.push(
            record
                .class_ids(h)
                .map_err(|e| parse_error(e.to_string()))?,
        );
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::{CalibratedPredictor, ConformalConfig};
    use crate::fixtures::{eight_class_tree, eight_class_view};

    #[test]
    fn probabilities_are_matched_by_name() {
        let h = eight_class_tree();
        let text = "8,7,6,5,4,3,2,1\n0.125,0.125,0.125,0.14,0.125,0.08,0.13,0.15\n";
        let views = parse_probabilities(text.as_bytes(), &h, "mem").unwrap();
        assert_eq!(views, vec![eight_class_view()]);

        let mut out = Vec::new();
        write_probabilities(&mut out, &h, &views).unwrap();
        assert_eq!(
            parse_probabilities(out.as_slice(), &h, "mem").unwrap(),
            views
        );
    }

    #[test]
    fn probability_errors() {
        let h = eight_class_tree();
        let bad_header = "1,2,3,4,5,6,7,9\n0.125,0.125,0.125,0.125,0.125,0.125,0.125,0.125\n";
        assert!(matches!(
            parse_probabilities(bad_header.as_bytes(), &h, "m"),
            Err(Error::Parse { line: 1, .. })
        ));
        let missing = "1,2,3,4,5,6,7\n0.125,0.125,0.125,0.125,0.125,0.125,0.25\n";
        assert!(parse_probabilities(missing.as_bytes(), &h, "m").is_err());
        let nan = "1,2,3,4,5,6,7,8\n0.125,x,0.125,0.125,0.125,0.125,0.125,0.125\n";
        assert!(matches!(
            parse_probabilities(nan.as_bytes(), &h, "m"),
            Err(Error::Parse { line: 2, .. })
        ));
        let unnormalized = "1,2,3,4,5,6,7,8\n0.5,0.5,0.5,0,0,0,0,0\n";
        let err = parse_probabilities(unnormalized.as_bytes(), &h, "m").unwrap_err();
        assert_eq!(err.kind(), crate::error::ErrorKind::Numeric);
        assert!(parse_probabilities("1,2,3,4,5,6,7,8\n".as_bytes(), &h, "m").is_err());
    }

    #[test]
    fn labels_round_trip() {
        let h = eight_class_tree();
        let labels = parse_labels("3\n\n 5 \n1\n".as_bytes(), &h, "m").unwrap();
        assert_eq!(labels, vec![2, 4, 0]);
        let mut out = Vec::new();
        write_labels(&mut out, &h, &labels).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "3\n5\n1\n");
        assert!(matches!(
            parse_labels("v2\n".as_bytes(), &h, "m"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn prediction_lines() {
        let h = eight_class_tree();
        let p = eight_class_view();
        let pred = CalibratedPredictor::from_threshold(ConformalConfig::new("crsvp", 0.1), 0.3, 10)
            .unwrap()
            .predict(&h, &p, 0.5)
            .unwrap();
        let mut out = Vec::new();
        write_predictions(&mut out, &h, &[pred]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "{\"classes\":[\"1\",\"2\"],\"nodes\":[\"v4\"],\"size\":2,\"repr_complexity\":1}\n"
        );
        assert_eq!(
            parse_predictions(text.as_bytes(), &h, "m").unwrap(),
            vec![vec![0, 1]]
        );
        assert!(parse_predictions(
            "{\"classes\":[\"q\"],\"nodes\":[],\"size\":1,\"repr_complexity\":1}\n".as_bytes(),
            &h,
            "m"
        )
        .is_err());
    }
}
