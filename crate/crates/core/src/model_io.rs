//! Versioned model files.
//!
//! A model is stored as a JSON document with a format tag and version
//! envelope around the full fit state. Field order is fixed by the struct
//! definitions and floating-point values round-trip exactly, so writing the
//! same model twice produces identical bytes and a reloaded model predicts
//! bitwise identically.
//!
//! Loading never requires the training data; the returned model is detached
//! and supports prediction and on-path view changes. Continued fitting
//! needs `BoostModel::attach` with data matching the stored fingerprint.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boost::BoostModel;
use crate::error::{Error, Result};
use crate::family::family_by_name;

const FORMAT_TAG: &str = "lssboost-model";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    model: BoostModel,
}

/// Serialize a model to the file format string.
pub fn to_json(model: &BoostModel) -> Result<String> {
    let envelope = Envelope {
        format: FORMAT_TAG.to_string(),
        version: FORMAT_VERSION,
        model: clone_state(model)?,
    };
    let mut text = serde_json::to_string_pretty(&envelope)
        .map_err(|e| Error::ModelFile(format!("serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Parse a model from the file format string. The model comes back
/// detached.
pub fn from_json(text: &str) -> Result<BoostModel> {
    let envelope: Envelope = serde_json::from_str(text)
        .map_err(|e| Error::ModelFile(format!("unreadable model file: {e}")))?;
    if envelope.format != FORMAT_TAG {
        return Err(Error::ModelFile(format!(
            "not a model file (format tag '{}')",
            envelope.format
        )));
    }
    if envelope.version != FORMAT_VERSION {
        return Err(Error::ModelFile(format!(
            "unsupported model file version {} (this build reads {FORMAT_VERSION})",
            envelope.version
        )));
    }
    let model = envelope.model;
    family_by_name(&model.family_name)?;
    if model.visible.len() != model.offsets.len()
        || model.retained.len() != model.offsets.len()
        || model.terms.len() != model.offsets.len()
    {
        return Err(Error::ModelFile(
            "inconsistent per-parameter field lengths".into(),
        ));
    }
    Ok(model)
}

pub fn write_model(model: &BoostModel, path: &Path) -> Result<()> {
    fs::write(path, to_json(model)?)
        .map_err(|e| Error::ModelFile(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<BoostModel> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::ModelFile(format!("cannot read {}: {e}", path.display())))?;
    from_json(&text)
}

// Serialize from a shared reference by round-tripping the serializable
// state; BoostModel is not Clone because of its runtime attachment.
fn clone_state(model: &BoostModel) -> Result<BoostModel> {
    let raw = serde_json::to_string(model)
        .map_err(|e| Error::ModelFile(format!("serialization failed: {e}")))?;
    serde_json::from_str(&raw).map_err(|e| Error::ModelFile(format!("serialization failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boost::{fit, BoostControl, ModelSpec, PredictScale};
    use crate::data::{Column, ColumnData, Dataset};
    use crate::learner::BaseLearnerSpec;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut unif = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let x: Vec<f64> = (0..n).map(|_| 4.0 * unif() - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| 0.5 + v + (unif() - 0.5)).collect();
        Dataset::from_columns(vec![
            Column {
                name: "y".into(),
                data: ColumnData::Continuous(y),
            },
            Column {
                name: "x".into(),
                data: ColumnData::Continuous(x),
            },
        ])
        .unwrap()
    }

    fn spec() -> ModelSpec {
        ModelSpec {
            family: "gaussian".into(),
            response: "y".into(),
            terms: vec![vec![
                BaseLearnerSpec::linear("x"),
                BaseLearnerSpec::pspline("x"),
            ]],
        }
    }

    fn control(mstop: usize) -> BoostControl {
        BoostControl {
            mstop: vec![mstop],
            ..BoostControl::default()
        }
    }

    #[test]
    fn round_trip_preserves_predictions_bitwise() {
        let data = dataset(60, 1);
        let model = fit(&spec(), &data, None, &control(15)).unwrap();
        let loaded = from_json(&to_json(&model).unwrap()).unwrap();
        assert!(!loaded.is_attached());
        let a = model.predict(&data, PredictScale::Response).unwrap();
        let b = loaded.predict(&data, PredictScale::Response).unwrap();
        for k in 0..2 {
            for i in 0..60 {
                assert_eq!(a[k][i].to_bits(), b[k][i].to_bits());
            }
        }
    }

    #[test]
    fn serialization_is_byte_stable() {
        let data = dataset(40, 2);
        let model = fit(&spec(), &data, None, &control(8)).unwrap();
        assert_eq!(to_json(&model).unwrap(), to_json(&model).unwrap());
    }

    #[test]
    fn version_tampering_is_rejected() {
        let data = dataset(40, 3);
        let model = fit(&spec(), &data, None, &control(5)).unwrap();
        let text = to_json(&model).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["version"] = serde_json::json!(99);
        let err = from_json(&value.to_string());
        assert!(matches!(err, Err(Error::ModelFile(_))));

        value["version"] = serde_json::json!(1);
        value["format"] = serde_json::json!("something-else");
        assert!(matches!(
            from_json(&value.to_string()),
            Err(Error::ModelFile(_))
        ));
    }

    #[test]
    fn garbage_input_is_rejected() {
        assert!(matches!(from_json("not json"), Err(Error::ModelFile(_))));
        assert!(matches!(from_json("{}"), Err(Error::ModelFile(_))));
    }

    #[test]
    fn file_round_trip_through_disk() {
        let data = dataset(50, 4);
        let model = fit(&spec(), &data, None, &control(10)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        write_model(&model, &path).unwrap();
        let loaded = read_model(&path).unwrap();
        assert_eq!(loaded.fingerprint, model.fingerprint);
        assert_eq!(loaded.history, model.history);
    }

    #[test]
    fn reload_attach_continue_matches_uninterrupted_fit() {
        let data = dataset(70, 5);
        let model = fit(&spec(), &data, None, &control(6)).unwrap();
        let mut reloaded = from_json(&to_json(&model).unwrap()).unwrap();
        reloaded.attach(data.clone()).unwrap();
        reloaded.subset(&[14]).unwrap();
        let continued = reloaded.predict(&data, PredictScale::Link).unwrap();
        let direct = fit(&spec(), &data, None, &control(14)).unwrap();
        let uninterrupted = direct.predict(&data, PredictScale::Link).unwrap();
        for k in 0..2 {
            for i in 0..70 {
                assert_eq!(continued[k][i].to_bits(), uninterrupted[k][i].to_bits());
            }
        }
    }

    #[test]
    fn reloaded_model_supports_on_path_views_without_data() {
        let data = dataset(50, 6);
        let model = fit(&spec(), &data, None, &control(12)).unwrap();
        let mut loaded = from_json(&to_json(&model).unwrap()).unwrap();
        loaded.subset(&[4]).unwrap();
        let view = loaded.predict(&data, PredictScale::Link).unwrap();
        let mut original = model;
        original.subset(&[4]).unwrap();
        let reference = original.predict(&data, PredictScale::Link).unwrap();
        for k in 0..2 {
            for i in 0..50 {
                assert_eq!(view[k][i].to_bits(), reference[k][i].to_bits());
            }
        }
    }
}
