use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::container::{Container, SectionKind};
use super::record::MeasurementRecord;
use crate::diffcore::Tensor;
use crate::physics::{CoilMaps, FanBeamGeometry, OperatorDesc};
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

/// Serializes a record into a container.
pub fn record_to_container(record: &MeasurementRecord) -> Result<Container> {
    let operator = match &record.operator {
        OperatorDesc::Identity { shape } => json!({ "kind": "identity", "shape": shape }),
        OperatorDesc::FanBeam(g) => json!({ "kind": "fan_beam", "geometry": g }),
        OperatorDesc::FourierMask { .. } => json!({ "kind": "fourier_mask" }),
    };
    let mut c = Container::new(json!({
        "id": record.id,
        "noise_sigma": record.noise_sigma,
        "operator": operator,
    }));
    let kind = match record.operator {
        OperatorDesc::Identity { .. } => SectionKind::Image,
        OperatorDesc::FanBeam(_) => SectionKind::Sinogram,
        OperatorDesc::FourierMask { .. } => SectionKind::Kspace,
    };
    c.push(kind, "measurement", record.measurement.clone());
    if let OperatorDesc::FourierMask { mask, coil_maps } = &record.operator {
        c.push(SectionKind::Mask, "mask", mask.clone());
        c.push(SectionKind::CoilMaps, "coil_maps", coil_maps.tensor().clone());
    }
    if let Some(gt) = &record.ground_truth {
        c.push(SectionKind::Image, "ground_truth", gt.clone());
    }
    Ok(c)
}

fn meta_err(what: &str) -> Error {
    Error::Format(format!("record metadata lacks a valid `{what}`"))
}

pub fn record_from_container(c: &Container) -> Result<MeasurementRecord> {
    let id = c.meta["id"].as_str().ok_or_else(|| meta_err("id"))?.to_string();
    let noise_sigma = c.meta["noise_sigma"].as_f64().ok_or_else(|| meta_err("noise_sigma"))?;
    let op = &c.meta["operator"];
    let operator = match op["kind"].as_str() {
        Some("identity") => OperatorDesc::Identity {
            shape: serde_json::from_value(op["shape"].clone()).map_err(|_| meta_err("shape"))?,
        },
        Some("fan_beam") => OperatorDesc::FanBeam(
            serde_json::from_value::<FanBeamGeometry>(op["geometry"].clone())
                .map_err(|_| meta_err("geometry"))?,
        ),
        Some("fourier_mask") => OperatorDesc::FourierMask {
            mask: c.require("mask")?.tensor.clone(),
            coil_maps: CoilMaps::from_normalized(c.require("coil_maps")?.tensor.clone())?,
        },
        _ => return Err(meta_err("operator kind")),
    };
    let record = MeasurementRecord {
        id,
        measurement: c.require("measurement")?.tensor.clone(),
        operator,
        noise_sigma,
        ground_truth: c.get("ground_truth").map(|s| s.tensor.clone()),
    };
    record.validate()?;
    Ok(record)
}

pub fn save_record(record: &MeasurementRecord, path: &Path) -> Result<()> {
    record_to_container(record)?.save(path)
}

pub fn load_record(path: &Path) -> Result<MeasurementRecord> {
    record_from_container(&Container::load(path)?)
}

/// Which role a record plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Pretrain,
    TestIn,
    TestOut,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub split: SplitRole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub records: Vec<ManifestEntry>,
    /// Free-form provenance (family and operator settings, realized AF).
    #[serde(default)]
    pub info: serde_json::Value,
}

/// Records with their split roles.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<(MeasurementRecord, SplitRole)>,
    pub info: serde_json::Value,
}

impl Dataset {
    pub fn get(&self, id: &str) -> Result<&MeasurementRecord> {
        self.records
            .iter()
            .map(|(r, _)| r)
            .find(|r| r.id == id)
            .ok_or_else(|| Error::Lookup(format!("record `{id}` is not in the dataset")))
    }

    pub fn role(&self, id: &str) -> Option<SplitRole> {
        self.records.iter().find(|(r, _)| r.id == id).map(|(_, s)| *s)
    }

    pub fn with_role(&self, role: SplitRole) -> Vec<&MeasurementRecord> {
        self.records.iter().filter(|(_, s)| *s == role).map(|(r, _)| r).collect()
    }

    /// Writes `manifest.json` and one `<id>.dinr` per record.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let mut entries = Vec::new();
        for (rec, role) in &self.records {
            let file = format!("{}.dinr", rec.id);
            save_record(rec, &dir.join(&file))?;
            entries.push(ManifestEntry {
                id: rec.id.clone(),
                file,
                split: *role,
            });
        }
        let manifest = Manifest {
            records: entries,
            info: self.info.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        let path = dir.join(MANIFEST);
        std::fs::write(&path, text + "\n").map_err(|e| Error::file(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let mut records = Vec::with_capacity(manifest.records.len());
        for entry in manifest.records {
            let rec = load_record(&dir.join(&entry.file))?;
            if rec.id != entry.id {
                return Err(Error::Format(format!(
                    "manifest lists `{}` but the file holds `{}`",
                    entry.id, rec.id
                )));
            }
            records.push((rec, entry.split));
        }
        Ok(Self {
            records,
            info: manifest.info,
        })
    }
}

/// Writes a single tensor as a one-section container.
pub fn save_image(tensor: &Tensor, path: &Path) -> Result<()> {
    let mut c = Container::new(json!({}));
    c.push(SectionKind::Image, "image", tensor.clone());
    c.save(path)
}

pub fn load_image(path: &Path) -> Result<Tensor> {
    Ok(Container::load(path)?.require("image")?.tensor.clone())
}
