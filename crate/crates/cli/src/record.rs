//! Experiment result rows and their CSV file.

use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const HEADER: &str = "dataset,loss,aug_a,aug_b,ratio,batch_size,projector_dim,lambda,mu,nu,p,seed,accuracy_mean,accuracy_std,final_loss,runtime_s";

/// One completed pretrain-and-evaluate run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub loss: String,
    pub aug_a: String,
    pub aug_b: String,
    pub ratio: f64,
    pub batch_size: usize,
    pub projector_dim: usize,
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub p: f64,
    pub seed: u64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub final_loss: f64,
    pub runtime_s: f64,
}

impl RunRecord {
    /// The value of a numeric column by name, for plotting.
    pub fn numeric(&self, column: &str) -> Option<f64> {
        Some(match column {
            "ratio" => self.ratio,
            "batch_size" => self.batch_size as f64,
            "projector_dim" => self.projector_dim as f64,
            "lambda" => self.lambda,
            "mu" => self.mu,
            "nu" => self.nu,
            "p" => self.p,
            "seed" => self.seed as f64,
            "accuracy_mean" => self.accuracy_mean,
            "accuracy_std" => self.accuracy_std,
            "final_loss" => self.final_loss,
            "runtime_s" => self.runtime_s,
            _ => return None,
        })
    }
}

/// Appends rows, writing the header first when the file is new or empty.
pub fn append_records(path: &Path, records: &[RunRecord]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    if !fresh {
        let first = std::fs::read_to_string(path)?;
        let header = first.lines().next().unwrap_or("");
        anyhow::ensure!(
            header == HEADER,
            "{} has an unexpected header '{header}'",
            path.display()
        );
    }
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> anyhow::Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    anyhow::ensure!(
        header.join(",") == HEADER,
        "{} has an unexpected header '{}'",
        path.display(),
        header.join(",")
    );
    let mut out = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let record: RunRecord =
            row.map_err(|e| anyhow::anyhow!("{} row {}: {e}", path.display(), i + 2))?;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seed: u64) -> RunRecord {
        RunRecord {
            dataset: "MUTAG".into(),
            loss: "vicreghsic".into(),
            aug_a: "nodedrop".into(),
            aug_b: "subgraph".into(),
            ratio: 0.2,
            batch_size: 128,
            projector_dim: 160,
            lambda: 25.0,
            mu: 25.0,
            nu: 1.0,
            p: 1.5,
            seed,
            accuracy_mean: 0.8123456789012345,
            accuracy_std: 0.01,
            final_loss: 367.25,
            runtime_s: 7.5,
        }
    }

    #[test]
    fn header_matches_field_order() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(sample(0)).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), HEADER);
    }

    #[test]
    fn append_and_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        append_records(&path, &[sample(1)]).unwrap();
        append_records(&path, &[sample(2), sample(3)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("dataset,").count(), 1);
        let back = read_records(&path).unwrap();
        assert_eq!(back, vec![sample(1), sample(2), sample(3)]);
    }

    #[test]
    fn rejects_foreign_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("other.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_records(&path).is_err());
        assert!(append_records(&path, &[sample(0)]).is_err());
    }
}
