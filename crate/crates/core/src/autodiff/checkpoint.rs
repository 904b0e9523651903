//! Parameter checkpoints.
//!
//! A checkpoint is a JSON object `{"format": "...", "params": {name ->
//! {"shape": [...], "data": [...]}}}` with names in sorted order. Doubles are
//! printed with shortest round-trip formatting, so save/load is bit-exact for
//! finite values (and the substrate never holds non-finite values).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

use super::Params;

pub const FORMAT_TAG: &str = "semspa-params-v1";

#[derive(Debug, Serialize, Deserialize)]
struct StoredTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredParams {
    format: String,
    params: BTreeMap<String, StoredTensor>,
}

/// All parameters as a flat name -> tensor map (names sort in the output).
pub fn to_map(ps: &Params) -> BTreeMap<String, DenseTensor> {
    ps.iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect()
}

/// Load a name -> tensor map into an existing store; every parameter must be
/// present with a matching shape, and extra entries are rejected.
pub fn load_map_into(ps: &mut Params, mut map: BTreeMap<String, DenseTensor>) -> Result<()> {
    let ids: Vec<_> = ps.iter().map(|(id, p)| (id, p.name.clone())).collect();
    for (id, name) in ids {
        let t = map
            .remove(&name)
            .ok_or_else(|| Error::data(format!("checkpoint missing parameter {name:?}")))?;
        if t.shape() != ps.value(id).shape() {
            return Err(Error::ShapeMismatch {
                op: "checkpoint",
                lhs: ps.value(id).shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
        ps.set_value(id, t);
    }
    if let Some(name) = map.keys().next() {
        return Err(Error::data(format!("checkpoint has unknown parameter {name:?}")));
    }
    Ok(())
}

/// Serialize all parameters as a flat name -> tensor map.
pub fn params_to_json(ps: &Params) -> Result<String> {
    let mut map = BTreeMap::new();
    for (_, p) in ps.iter() {
        map.insert(
            p.name.clone(),
            StoredTensor { shape: p.value.shape().to_vec(), data: p.value.data().to_vec() },
        );
    }
    Ok(serde_json::to_string(&StoredParams { format: FORMAT_TAG.into(), params: map })?)
}

pub fn save_params(ps: &Params, path: &Path) -> Result<()> {
    std::fs::write(path, params_to_json(ps)?)?;
    Ok(())
}

/// Parse a checkpoint JSON string into a name -> tensor map.
pub fn parse_params_json(json: &str) -> Result<BTreeMap<String, DenseTensor>> {
    let stored: StoredParams = serde_json::from_str(json)?;
    if stored.format != FORMAT_TAG {
        return Err(Error::data(format!("unknown checkpoint format {:?}", stored.format)));
    }
    let mut out = BTreeMap::new();
    for (name, t) in stored.params {
        out.insert(name, DenseTensor::new(t.shape, t.data)?);
    }
    Ok(out)
}

/// Load a checkpoint JSON string into an existing store.
pub fn load_params_into(ps: &mut Params, json: &str) -> Result<()> {
    load_map_into(ps, parse_params_json(json)?)
}
