//! Versioned JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use qvc_core::circuit::Architecture;
use qvc_core::data::TaskModel;
use qvc_core::encoding::Preprocessor;
use qvc_core::model::Classifier;

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredClassifier {
    /// Class this classifier answers 1 for.
    pub positive_class: usize,
    pub theta: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub architecture: Architecture,
    pub preprocessor: Preprocessor,
    pub class_names: Vec<String>,
    pub classifiers: Vec<StoredClassifier>,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn from_models(
        architecture: Architecture,
        preprocessor: Preprocessor,
        class_names: Vec<String>,
        models: &[TaskModel],
        provenance: Provenance,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            architecture,
            preprocessor,
            class_names,
            classifiers: models
                .iter()
                .map(|m| StoredClassifier {
                    positive_class: m.positive_class,
                    theta: m.classifier.theta.clone(),
                    bias: m.classifier.bias,
                })
                .collect(),
            provenance,
        }
    }

    /// Rebuild the trained ensemble (without training logs).
    pub fn to_models(&self) -> Result<Vec<TaskModel>, CliError> {
        let spec = self.architecture.build().map_err(|e| CliError::Model(e.to_string()))?;
        self.classifiers
            .iter()
            .map(|s| {
                let classifier = Classifier::new(spec.clone(), s.theta.clone(), s.bias, self.preprocessor)
                    .map_err(|e| CliError::Model(e.to_string()))?;
                Ok(TaskModel {
                    positive_class: s.positive_class,
                    classifier,
                    metrics: Vec::new(),
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let m: ModelFile = serde_json::from_str(text).map_err(|e| CliError::Model(e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(CliError::Model(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
        std::fs::write(path, self.to_json()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Model(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qvc_core::training::init_params;

    #[test]
    fn json_round_trip_is_exact() {
        let arch = Architecture::new(3, vec![1, 2], true);
        let spec = arch.build().unwrap();
        let (theta, _) = init_params(&spec, 4);
        let pre = Preprocessor::new(6, 0.5, 1).unwrap();
        let c = Classifier::new(spec, theta, -0.1234567890123456, pre).unwrap();
        let models = vec![TaskModel {
            positive_class: 1,
            classifier: c,
            metrics: vec![],
        }];
        let file = ModelFile::from_models(
            arch,
            pre,
            vec!["a".into(), "b".into()],
            &models,
            Provenance {
                seed: 4,
                config_hash: "00".into(),
            },
        );
        let back = ModelFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_models().unwrap()[0].classifier, models[0].classifier);

        let mut wrong = file.clone();
        wrong.format_version = 99;
        assert!(ModelFile::from_json(&wrong.to_json()).is_err());
    }
}
