use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fem::SimOutput;
use crate::error::{Error, Result};
use crate::mode::{DeformationMode, MechanicalProps};

/// One line of `props.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropsRow {
    pub image_index: usize,
    pub mode_code: u8,
    #[serde(rename = "sigma_max_MPa")]
    pub sigma_max_mpa: f64,
    pub eps_lim: f64,
    /// False when the curve ended before the Considere point; `eps_lim` is
    /// then the last simulated strain.
    #[serde(default = "necked")]
    pub necking: bool,
}

fn necked() -> bool {
    true
}

impl PropsRow {
    pub fn new(image_index: usize, props: &MechanicalProps) -> Self {
        Self {
            image_index,
            mode_code: props.mode.code(),
            sigma_max_mpa: props.sigma_max,
            eps_lim: props.eps_lim,
            necking: true,
        }
    }

    pub fn from_output(image_index: usize, out: &SimOutput) -> Self {
        Self {
            necking: out.necking_detected,
            ..Self::new(image_index, &out.props)
        }
    }

    pub fn props(&self) -> Result<MechanicalProps> {
        MechanicalProps::new(self.sigma_max_mpa, self.eps_lim, DeformationMode::from_code(self.mode_code)?)
    }
}

pub fn curve_file_name(image_index: usize, mode: DeformationMode) -> String {
    format!("curve_{image_index:05}_{}.csv", mode.code())
}

pub fn write_curve_csv(path: &Path, out: &SimOutput) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "true_strain,true_stress_MPa,nominal_stress_MPa,hardening_rate_MPa")?;
    let c = &out.curve;
    for i in 0..c.len() {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e}",
            c.true_strain[i], c.true_stress[i], c.nominal_stress[i], out.hardening_rate[i]
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_props_csv(path: &Path, rows: &[PropsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_props_csv(path: &Path) -> Result<Vec<PropsRow>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<PropsRow>, _>>()
        .map_err(csv_error)?;
    for row in &rows {
        DeformationMode::from_code(row.mode_code)?;
    }
    Ok(rows)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn props_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("props.csv");
        let rows = vec![
            PropsRow { image_index: 0, mode_code: 0, sigma_max_mpa: 412.5, eps_lim: 0.21, necking: true },
            PropsRow { image_index: 3, mode_code: 3, sigma_max_mpa: 1.0 / 3.0, eps_lim: 0.1, necking: false },
        ];
        write_props_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("image_index,mode_code,sigma_max_MPa,eps_lim,necking\n"));
        assert_eq!(read_props_csv(&path).unwrap(), rows);
        assert!(matches!(read_props_csv(&dir.path().join("none.csv")), Err(Error::MissingArtifact(_))));
        std::fs::write(&path, "image_index,mode_code,sigma_max_MPa,eps_lim\n1,9,1.0,0.1\n").unwrap();
        assert!(read_props_csv(&path).is_err());
    }
}
