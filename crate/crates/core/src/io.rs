//! CSV datasets, matrix cohorts, and JSON reports.
//!
//! Dataset CSV: header `y,x1,...,xd`, one observation per row, integer labels
//! from 1. Cohort manifest CSV: header `patient_id,label,path`, with `path`
//! relative to the manifest's directory; each patient file has header
//! `gene,<cell type>,...` and one row per gene.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dataset::LabeledDataset;
use crate::error::{HnpError, Result};
use crate::featurize::{Matrix, PatientMatrix};

pub const REPORT_SCHEMA: &str = "hnp-report/1";

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| HnpError::io(path, e))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> HnpError {
    HnpError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(r)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn csv_failure(path: &Path, e: csv::Error) -> HnpError {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(path, line, e.to_string())
}

fn parse_number(path: &Path, line: u64, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .parse()
        .map_err(|_| parse_error(path, line, format!("not a number: {cell:?}")))?;
    if !v.is_finite() {
        return Err(parse_error(
            path,
            line,
            format!("non-finite value: {cell:?}"),
        ));
    }
    Ok(v)
}

fn parse_label(path: &Path, line: u64, cell: &str) -> Result<usize> {
    match cell.parse::<i64>() {
        Ok(v) if v >= 1 => Ok(v as usize),
        Ok(v) => Err(parse_error(
            path,
            line,
            format!("label {v} is outside 1..=I"),
        )),
        Err(_) => Err(parse_error(
            path,
            line,
            format!("label is not an integer: {cell:?}"),
        )),
    }
}

/// Reads a labeled dataset; the class count is the largest label.
pub fn read_dataset_csv<R: Read>(reader: R, path: &Path) -> Result<LabeledDataset> {
    let mut rdr = csv_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_failure(path, e))?,
        None => {
            return Err(HnpError::invalid(format!(
                "{}: file is empty",
                path.display()
            )))
        }
    };
    if header.get(0) != Some("y") || header.len() < 2 {
        return Err(parse_error(
            path,
            line_of(&header),
            "missing header; expected `y,x1,...,xd`",
        ));
    }
    let d = header.len() - 1;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_failure(path, e))?;
        let line = line_of(&record);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != d + 1 {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", d + 1, record.len()),
            ));
        }
        labels.push(parse_label(path, line, &record[0])?);
        for cell in record.iter().skip(1) {
            values.push(parse_number(path, line, cell)?);
        }
    }
    if labels.is_empty() {
        return Err(HnpError::invalid(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let k = *labels.iter().max().expect("nonempty");
    if k < 2 {
        return Err(HnpError::invalid(format!(
            "{}: labels must include a class above 1",
            path.display()
        )));
    }
    LabeledDataset::from_flat(d, values, labels, k)
}

pub fn load_dataset_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    read_dataset_csv(open(path)?, path)
}

/// Feature rows of a CSV with header `x1,...,xd` or `y,x1,...,xd`; any label
/// column is ignored.
pub fn load_features_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(open(path)?);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_failure(path, e))?,
        None => {
            return Err(HnpError::invalid(format!(
                "{}: file is empty",
                path.display()
            )))
        }
    };
    if header.iter().any(|h| h.parse::<f64>().is_ok()) {
        return Err(parse_error(path, line_of(&header), "missing header row"));
    }
    let skip = usize::from(header.get(0) == Some("y"));
    let width = header.len();
    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_failure(path, e))?;
        let line = line_of(&record);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != width {
            return Err(parse_error(
                path,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        rows.push(
            record
                .iter()
                .skip(skip)
                .map(|c| parse_number(path, line, c))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if rows.is_empty() {
        return Err(HnpError::invalid(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(rows)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HnpError::io(path, e))
}

fn csv_write_error(path: &Path, e: csv::Error) -> HnpError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HnpError::io(path, io),
        other => HnpError::invalid(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `y,x1,...,xd`; values use the shortest representation that parses
/// back to the same `f64`.
pub fn write_dataset_csv(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["y".to_string()];
    header.extend((1..=data.dim()).map(|j| format!("x{j}")));
    w.write_record(&header)
        .map_err(|e| csv_write_error(path, e))?;
    for (x, y) in data.rows().zip(data.labels()) {
        let mut rec = vec![y.to_string()];
        rec.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_write_error(path, e))?;
    }
    w.flush().map_err(|e| HnpError::io(path, e))
}

/// One label per line.
pub fn write_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for l in labels {
        writeln!(w, "{l}").map_err(|e| HnpError::io(path, e))?;
    }
    w.flush().map_err(|e| HnpError::io(path, e))
}

/// Reads a `gene,<cell types>` matrix file.
pub fn load_patient_csv(id: &str, path: impl AsRef<Path>) -> Result<PatientMatrix> {
    let path = path.as_ref();
    let mut rdr = csv_reader(open(path)?);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_failure(path, e))?,
        None => {
            return Err(HnpError::invalid(format!(
                "{}: file is empty",
                path.display()
            )))
        }
    };
    if header.get(0) != Some("gene") || header.len() < 2 {
        return Err(parse_error(
            path,
            line_of(&header),
            "missing header; expected `gene,<cell type>,...`",
        ));
    }
    let cell_types: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut genes = Vec::new();
    let mut values = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_failure(path, e))?;
        let line = line_of(&record);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != header.len() {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        genes.push(record[0].to_string());
        for cell in record.iter().skip(1) {
            values.push(parse_number(path, line, cell)?);
        }
    }
    if genes.is_empty() {
        return Err(HnpError::invalid(format!(
            "{}: no gene rows",
            path.display()
        )));
    }
    let m = Matrix::new(genes.len(), cell_types.len(), values)?;
    PatientMatrix::new(id, genes, cell_types, m)
}

pub fn write_patient_csv(patient: &PatientMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["gene".to_string()];
    header.extend(patient.cell_types.iter().cloned());
    w.write_record(&header)
        .map_err(|e| csv_write_error(path, e))?;
    for (u, gene) in patient.genes.iter().enumerate() {
        let mut rec = vec![gene.clone()];
        rec.extend(patient.values.row(u).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_write_error(path, e))?;
    }
    w.flush().map_err(|e| HnpError::io(path, e))
}

/// A labeled matrix cohort read from a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub patients: Vec<PatientMatrix>,
    /// Labels from the manifest; `None` where the cell is empty.
    pub labels: Vec<Option<usize>>,
}

pub fn load_cohort(manifest: impl AsRef<Path>) -> Result<Cohort> {
    let manifest = manifest.as_ref();
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut rdr = csv_reader(open(manifest)?);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_failure(manifest, e))?,
        None => {
            return Err(HnpError::invalid(format!(
                "{}: file is empty",
                manifest.display()
            )))
        }
    };
    if header.iter().collect::<Vec<_>>() != ["patient_id", "label", "path"] {
        return Err(parse_error(
            manifest,
            line_of(&header),
            "missing header; expected `patient_id,label,path`",
        ));
    }
    let mut patients = Vec::new();
    let mut labels = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_failure(manifest, e))?;
        let line = line_of(&record);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != 3 {
            return Err(parse_error(
                manifest,
                line,
                format!("expected 3 fields, found {}", record.len()),
            ));
        }
        let label = match &record[1] {
            "" => None,
            cell => Some(parse_label(manifest, line, cell)?),
        };
        let file = PathBuf::from(&record[2]);
        let file = if file.is_absolute() {
            file
        } else {
            base.join(file)
        };
        patients.push(load_patient_csv(&record[0], file)?);
        labels.push(label);
    }
    if patients.is_empty() {
        return Err(HnpError::invalid(format!(
            "{}: no patients listed",
            manifest.display()
        )));
    }
    Ok(Cohort { patients, labels })
}

/// Writes each patient to `<dir>/<id>.csv` and a `manifest.csv` listing them.
pub fn write_cohort(
    patients: &[PatientMatrix],
    labels: &[usize],
    dir: impl AsRef<Path>,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| HnpError::io(dir, e))?;
    let manifest = dir.join("manifest.csv");
    let mut w = csv::Writer::from_writer(create(&manifest)?);
    w.write_record(["patient_id", "label", "path"])
        .map_err(|e| csv_write_error(&manifest, e))?;
    for (p, l) in patients.iter().zip(labels) {
        let file = format!("{}.csv", p.id);
        write_patient_csv(p, dir.join(&file))?;
        w.write_record([p.id.as_str(), &l.to_string(), &file])
            .map_err(|e| csv_write_error(&manifest, e))?;
    }
    w.flush().map_err(|e| HnpError::io(&manifest, e))?;
    Ok(manifest)
}

/// JSON formatter that writes every float with 17 significant digits.
struct FixedPrecision(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for FixedPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: &'static str,
    kind: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON with a `schema` version and `kind` tag ahead of the body's
/// fields. Floats carry 17 significant digits, so equal inputs give equal
/// bytes and every value parses back exactly.
pub fn report_to_string<T: Serialize>(kind: &str, body: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut out,
        FixedPrecision(serde_json::ser::PrettyFormatter::new()),
    );
    Envelope {
        schema: REPORT_SCHEMA,
        kind,
        body,
    }
    .serialize(&mut ser)
    .map_err(|e| HnpError::invalid(format!("report serialization failed: {e}")))?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("JSON is UTF-8"))
}

pub fn emit_report<T: Serialize>(kind: &str, body: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = report_to_string(kind, body)?;
    std::fs::write(path, text).map_err(|e| HnpError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LabeledDataset> {
        read_dataset_csv(text.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn dataset_format() {
        let d = parse("y,x1,x2\n1,0.0,-1.0\n3,1.0,0.0\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.num_classes(), 3);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.row(0), &[0.0, -1.0]);
    }

    #[test]
    fn dataset_errors_carry_lines() {
        match parse("y,x1\n1,0.5\n0,1.0\n") {
            Err(HnpError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse("y,x1\n1,0.5\n2,abc\n") {
            Err(HnpError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse("y,x1,x2\n1,0.5\n") {
            Err(HnpError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse("1,0.5\n2,1.0\n"),
            Err(HnpError::Parse { line: 1, .. })
        ));
        assert!(matches!(parse("y,x1\n"), Err(HnpError::InvalidArgument(_))));
        assert!(matches!(parse(""), Err(HnpError::InvalidArgument(_))));
    }

    #[test]
    fn report_floats_have_17_digits() {
        #[derive(Serialize)]
        struct B {
            v: f64,
        }
        let s = report_to_string("test", &B { v: 0.1 }).unwrap();
        assert!(s.contains("\"schema\": \"hnp-report/1\""));
        assert!(s.contains("1.0000000000000001e-1"));
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["v"].as_f64(), Some(0.1));
    }
}
