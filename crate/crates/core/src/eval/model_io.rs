//! Trained-model directory. The frozen stages are regenerated from the seed,
//! so only the heads and the fitted scalers are stored.
//!
//! ```text
//! model.txt              seed=7
//!                        toggles=det,i3d,tsf
//! classifier.eitt        [d_in + 1, classes]   weight rows, then the bias row
//! pose_head.eitt         [d_in + 1, outputs]
//! detector_cls.eitt      [C + 1, 2]
//! detector_reg.eitt      [C + 1, 4]
//! feature_scaler.eitt    [2, d]                mean row, inverse-std row
//! representation_scaler.eitt
//! cell_scaler.eitt
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{load_tensor, save_tensor, Tensor};

use super::heads::{FeatureScaler, LinearHead};
use super::pipeline::{EitNet, PipelineConfig, StageToggles};

fn head_tensor(w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut data = w.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::new(vec![w.shape()[0] + 1, w.shape()[1]], data)
}

fn head_from(t: &Tensor, like: &Tensor, name: &str) -> Result<LinearHead> {
    let want = [like.shape()[0] + 1, like.shape()[1]];
    if t.shape() != want {
        return Err(Error::Format(format!("{name}: stored {:?}, model expects {want:?}", t.shape())));
    }
    let n = like.len();
    LinearHead::from_parts(
        Tensor::new(like.shape().to_vec(), t.data()[..n].to_vec())?,
        Tensor::from_vec(t.data()[n..].to_vec()),
    )
}

fn scaler_tensor(s: &FeatureScaler) -> Result<Tensor> {
    let mut data = s.mean.clone();
    data.extend_from_slice(&s.inv_std);
    Tensor::new(vec![2, s.mean.len()], data)
}

fn scaler_from(t: &Tensor, dim: usize, name: &str) -> Result<FeatureScaler> {
    if t.shape() != [2, dim] {
        return Err(Error::Format(format!("{name}: stored {:?}, model expects [2, {dim}]", t.shape())));
    }
    Ok(FeatureScaler { mean: t.data()[..dim].to_vec(), inv_std: t.data()[dim..].to_vec() })
}

pub fn save_model(dir: impl AsRef<Path>, model: &EitNet) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("model.txt"), format!("seed={}\ntoggles={}\n", model.seed, model.config.toggles))?;
    let h = &model.detector.head;
    let items = [
        ("classifier", head_tensor(&model.classifier.weight, &model.classifier.bias)?),
        ("pose_head", head_tensor(&model.pose_head.weight, &model.pose_head.bias)?),
        ("detector_cls", head_tensor(&h.cls_weight, &h.cls_bias)?),
        ("detector_reg", head_tensor(&h.reg_weight, &h.reg_bias)?),
        ("feature_scaler", scaler_tensor(&model.feature_scaler)?),
        ("representation_scaler", scaler_tensor(&model.representation_scaler)?),
        ("cell_scaler", scaler_tensor(&model.cell_scaler)?),
    ];
    for (name, t) in items {
        save_tensor(dir.join(format!("{name}.eitt")), &t)?;
    }
    Ok(())
}

/// Rebuilds the default-configured model named by `dir/model.txt` and
/// loads the stored heads and scalers into it.
pub fn load_model(dir: impl AsRef<Path>) -> Result<EitNet> {
    let dir = dir.as_ref();
    let meta = fs::read_to_string(dir.join("model.txt"))?;
    let (mut seed, mut toggles) = (None, None);
    for line in meta.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        match line.split_once('=') {
            Some(("seed", v)) => {
                seed = Some(v.parse::<u64>().map_err(|_| Error::Format(format!("bad seed {v:?}")))?)
            }
            Some(("toggles", v)) => toggles = Some(v.parse::<StageToggles>()?),
            _ => return Err(Error::Format(format!("unexpected model.txt line {line:?}"))),
        }
    }
    let (Some(seed), Some(toggles)) = (seed, toggles) else {
        return Err(Error::Format("model.txt needs seed= and toggles= lines".into()));
    };
    let mut m = EitNet::seeded(PipelineConfig { toggles, ..Default::default() }, seed)?;
    let load = |name: &str| load_tensor(dir.join(format!("{name}.eitt")));
    m.classifier = head_from(&load("classifier")?, &m.classifier.weight, "classifier")?;
    m.pose_head = head_from(&load("pose_head")?, &m.pose_head.weight, "pose_head")?;
    let cls = head_from(&load("detector_cls")?, &m.detector.head.cls_weight, "detector_cls")?;
    let reg = head_from(&load("detector_reg")?, &m.detector.head.reg_weight, "detector_reg")?;
    m.detector.head.cls_weight = cls.weight;
    m.detector.head.cls_bias = cls.bias;
    m.detector.head.reg_weight = reg.weight;
    m.detector.head.reg_bias = reg.bias;
    m.feature_scaler = scaler_from(&load("feature_scaler")?, m.feature_scaler.mean.len(), "feature_scaler")?;
    m.representation_scaler =
        scaler_from(&load("representation_scaler")?, m.representation_scaler.mean.len(), "representation_scaler")?;
    m.cell_scaler = scaler_from(&load("cell_scaler")?, m.cell_scaler.mean.len(), "cell_scaler")?;
    Ok(m)
}
