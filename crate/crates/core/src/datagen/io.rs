use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DatagenError, DatasetRecord, RecordFlags};

/// Column order of the dataset file.
pub const COLUMNS: [&str; 21] = [
    "T_c", "T_h", "T_l", "tau", "p_c", "p_h", "eps", "eps_b", "eps_a", "F", "Q_c", "eta", "C1", "C2",
    "C3", "C4", "Q_h", "W", "ratio", "group_id", "flags",
];

const FLOAT_COLUMNS: usize = 19;

fn io_err(path: &Path, source: std::io::Error) -> DatagenError {
    DatagenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn floats(r: &DatasetRecord) -> [f64; FLOAT_COLUMNS] {
    let f = r.features();
    let mut out = [0.0; FLOAT_COLUMNS];
    out[..16].copy_from_slice(&f);
    out[16] = r.q_h;
    out[17] = r.w;
    out[18] = r.ratio;
    out
}

/// Writes a header row and one row per record. Floats use 17 significant
/// digits so a read-back is bit-identical; missing values are `NaN`.
pub fn write_dataset_to<W: Write>(records: &[DatasetRecord], writer: W) -> Result<(), DatagenError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    let mut row: Vec<String> = Vec::with_capacity(COLUMNS.len());
    for r in records {
        row.clear();
        row.extend(floats(r).iter().map(|x| format!("{x:.16e}")));
        row.push(r.group_id.to_string());
        row.push(r.flags.to_field());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| DatagenError::Csv(e.into()))?;
    Ok(())
}

pub fn write_dataset(records: &[DatasetRecord], path: &Path) -> Result<(), DatagenError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_dataset_to(records, BufWriter::new(file))
}

/// Reads a dataset by column name; extra columns are ignored.
pub fn read_dataset_from<R: Read>(reader: R) -> Result<Vec<DatasetRecord>, DatagenError> {
    let mut rd = csv::Reader::from_reader(reader);
    let header = rd.headers()?.clone();
    let mut pos = [0usize; COLUMNS.len()];
    for (slot, name) in pos.iter_mut().zip(COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DatagenError::MissingColumn(name.to_string()))?;
    }
    let mut out = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row?;
        let field = |i: usize| row.get(pos[i]).unwrap_or("").trim();
        let mut v = [0.0; FLOAT_COLUMNS];
        for (i, x) in v.iter_mut().enumerate() {
            *x = field(i).parse().map_err(|_| {
                DatagenError::Schema(format!(
                    "row {}: column `{}` is not a number: `{}`",
                    line + 1,
                    COLUMNS[i],
                    field(i)
                ))
            })?;
        }
        let group_id = field(19).parse().map_err(|_| {
            DatagenError::Schema(format!("row {}: bad group_id `{}`", line + 1, field(19)))
        })?;
        let flags = RecordFlags::from_field(field(20))
            .map_err(|e| DatagenError::Schema(format!("row {}: {e}", line + 1)))?;
        out.push(DatasetRecord {
            t_c: v[0],
            t_h: v[1],
            t_ell: v[2],
            tau: v[3],
            p_c: v[4],
            p_h: v[5],
            eps: v[6],
            eps_b: v[7],
            eps_a: v[8],
            f: v[9],
            q_c: v[10],
            eta: v[11],
            c: [v[12], v[13], v[14], v[15]],
            q_h: v[16],
            w: v[17],
            ratio: v[18],
            group_id,
            flags,
        });
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DatagenError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_dataset_from(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::evaluate_tuple;
    use crate::model::{BatteryParams, GeneratorVariant};

    #[test]
    fn header_matches_schema() {
        let mut buf = Vec::new();
        write_dataset_to(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "T_c,T_h,T_l,tau,p_c,p_h,eps,eps_b,eps_a,F,Q_c,eta,C1,C2,C3,C4,Q_h,W,ratio,group_id,flags\n"
        );
    }

    #[test]
    fn empty_file_reads_back_empty() {
        let mut buf = Vec::new();
        write_dataset_to(&[], &mut buf).unwrap();
        assert!(read_dataset_from(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn round_trip_is_bit_identical_with_nan() {
        let mut r = evaluate_tuple(&BatteryParams::reference_enhanced(), 42, GeneratorVariant::TracePreserving);
        let clean = r;
        r.c[2] = f64::NAN;
        r.flags = RecordFlags::C3_UNSTABLE;
        let mut buf = Vec::new();
        write_dataset_to(&[clean, r], &mut buf).unwrap();
        let back = read_dataset_from(buf.as_slice()).unwrap();
        assert!(back[0].same_bits(&clean));
        assert!(back[1].same_bits(&r));
        assert!(String::from_utf8(buf).unwrap().contains("NaN"));
    }

    #[test]
    fn file_round_trip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let r = evaluate_tuple(&BatteryParams::reference_suppressed(), 7, GeneratorVariant::TracePreserving);
        write_dataset(&[r], &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert!(back[0].same_bits(&r));
        let missing = dir.path().join("absent.csv");
        assert!(matches!(read_dataset(&missing), Err(DatagenError::Io { .. })));
    }

    #[test]
    fn missing_column_is_named() {
        let text = "T_c,T_h\n1,2\n";
        match read_dataset_from(text.as_bytes()) {
            Err(DatagenError::MissingColumn(name)) => assert_eq!(name, "T_l"),
            other => panic!("{other:?}"),
        }
    }
}
