//! Fitted-model files and the covariate preprocessing they record.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Axis;
use serde::{Deserialize, Serialize};
use survival_svb::cavi::FitDocument;
use survival_svb::summaries::CredibleSet;
use survival_svb::{io, Error, SurvivalDataset, VariationalParams};

use crate::CliError;

/// Which columns were used, and the means subtracted from them, so the
/// same transformation can be replayed on new data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

impl Preprocessing {
    /// Apply `--filter-cv` then `--center` to training data.
    pub fn fit(data: SurvivalDataset, filter_cv: bool, center: bool) -> Result<(SurvivalDataset, Self), CliError> {
        let data = if filter_cv { data.filter_low_variation()?.0 } else { data };
        let features = Some((0..data.p()).map(|j| data.feature_name(j)).collect());
        let (data, center) = if center {
            let means = data.column_means().to_vec();
            (data.centered(), Some(means))
        } else {
            (data, None)
        };
        Ok((data, Self { features, center }))
    }

    /// Replay on another dataset: select the recorded columns by name and
    /// subtract the recorded means.
    pub fn apply(&self, data: SurvivalDataset) -> Result<SurvivalDataset, CliError> {
        let mut data = match &self.features {
            Some(features) => {
                let columns: HashMap<String, usize> = (0..data.p()).map(|j| (data.feature_name(j), j)).collect();
                let keep = features
                    .iter()
                    .map(|name| {
                        columns
                            .get(name)
                            .copied()
                            .ok_or_else(|| Error::InvalidData(format!("feature `{name}` from the model file is missing from the data")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let design = data.design().select(Axis(1), &keep);
                SurvivalDataset::new(data.times().to_vec(), data.status().to_vec(), design)?.with_feature_names(features.clone())?
            }
            None => data,
        };
        if let Some(center) = &self.center {
            if center.len() != data.p() {
                return Err(Error::Dimension {
                    what: "center".into(),
                    expected: data.p(),
                    found: center.len(),
                }
                .into());
            }
            let shifted = data.design() - &ndarray::Array1::from(center.clone());
            let names = (0..data.p()).map(|j| data.feature_name(j)).collect();
            data = SurvivalDataset::new(data.times().to_vec(), data.status().to_vec(), shifted)?.with_feature_names(names)?;
        }
        Ok(data)
    }

    pub fn feature_name(&self, j: usize) -> String {
        match &self.features {
            Some(names) => names[j].clone(),
            None => format!("x{}", j + 1),
        }
    }
}

/// `fit.json` / `mcmc.json`: the fit document plus preprocessing. Extra
/// fields (such as MCMC acceptance rates) are ignored when loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile<T> {
    #[serde(flatten)]
    pub fit: T,
    #[serde(flatten)]
    pub preprocessing: Preprocessing,
}

/// Extra fields a sampler summary carries beyond the fit layout.
#[derive(Deserialize)]
struct Loaded {
    #[serde(flatten)]
    fit: FitDocument,
    #[serde(default)]
    sets: Option<Vec<CredibleSet>>,
    #[serde(flatten)]
    preprocessing: Preprocessing,
}

/// A fit or sampler summary, with array lengths checked.
pub struct LoadedModel {
    pub doc: FitDocument,
    /// Draw-based credible sets, present for sampler summaries.
    pub sets: Option<Vec<CredibleSet>>,
    pub preprocessing: Preprocessing,
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let file: Loaded = io::load_json(path)?;
        let doc = file.fit;
        let p = doc.mu.len();
        let lengths = [
            ("sigma", doc.sigma.len()),
            ("gamma", doc.gamma.len()),
            ("beta_hat", doc.beta_hat.len()),
            ("features", file.preprocessing.features.as_ref().map_or(p, Vec::len)),
            ("sets", file.sets.as_ref().map_or(p, Vec::len)),
        ];
        for (what, found) in lengths {
            if found != p {
                return Err(Error::Dimension {
                    what: what.into(),
                    expected: p,
                    found,
                }
                .into());
            }
        }
        if let Some(g) = doc.gamma.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(Error::InvalidData(format!("gamma must lie in [0, 1], got {g}")).into());
        }
        Ok(Self {
            doc,
            sets: file.sets,
            preprocessing: file.preprocessing,
        })
    }

    pub fn p(&self) -> usize {
        self.doc.mu.len()
    }

    /// The variational family the document describes.
    pub fn params(&self) -> Result<VariationalParams, CliError> {
        Ok(VariationalParams::new(self.doc.mu.clone(), self.doc.sigma.clone(), self.doc.gamma.clone())?)
    }

    /// Load a dataset and bring it to the model's covariate space.
    pub fn prepare(&self, data_path: &Path) -> Result<SurvivalDataset, CliError> {
        let data = self.preprocessing.apply(io::load_survival_csv(data_path)?)?;
        if data.p() != self.p() {
            return Err(Error::Dimension {
                what: "data columns".into(),
                expected: self.p(),
                found: data.p(),
            }
            .into());
        }
        Ok(data)
    }
}
