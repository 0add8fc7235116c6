//! JSON documents for intensity models.
//!
//! ```json
//! {"dim": 1, "kind": "product",
//!  "green": {"type": "uniform_ball", "mass": 2.0},
//!  "red":   {"type": "trunc_gaussian", "mean": [0.5], "kappa": [40.0], "mass": 3.0}}
//! ```
//!
//! Grids are either inline (`points_per_axis`, `mask`, `values`) or a
//! `file` pointing at a grid header written by [`GridField::save`];
//! relative paths resolve against the document's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    GridField, IntensityModel, MarginalIntensity, MaskKind, MixtureComponent, TruncGaussianSpec,
};
use crate::error::{invalid, io_err, IdpgError, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points_per_axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<MaskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum MarginalDoc {
    UniformBall {
        mass: f64,
    },
    TruncGaussian {
        mean: Vec<f64>,
        kappa: Vec<f64>,
        mass: f64,
    },
    Grid(GridDoc),
}

#[derive(Serialize, Deserialize)]
struct ComponentDoc {
    label: String,
    green: MarginalDoc,
    red: MarginalDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelBody {
    Product {
        green: MarginalDoc,
        red: MarginalDoc,
    },
    Mixture {
        components: Vec<ComponentDoc>,
    },
    Tabulated {
        joint: GridDoc,
    },
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    dim: usize,
    #[serde(flatten)]
    body: ModelBody,
}

fn grid_from_doc(doc: GridDoc, dim: usize, default_mask: MaskKind, base: &Path) -> Result<GridField> {
    let field = match doc {
        GridDoc {
            file: Some(file),
            points_per_axis: None,
            mask: None,
            values: None,
        } => GridField::load(&base.join(file))?,
        GridDoc {
            file: None,
            points_per_axis: Some(n),
            mask,
            values: Some(values),
        } => GridField::from_values(dim, n, mask.unwrap_or(default_mask), values)?,
        _ => return invalid("a grid needs either \"file\" or \"points_per_axis\" with \"values\""),
    };
    if field.dim() != dim {
        return Err(IdpgError::DimensionMismatch {
            expected: dim,
            got: field.dim(),
        });
    }
    Ok(field)
}

fn grid_to_doc(g: &GridField) -> GridDoc {
    GridDoc {
        file: None,
        points_per_axis: Some(g.points_per_axis()),
        mask: Some(g.mask_kind()),
        values: Some(g.values().to_vec()),
    }
}

fn marginal_from_doc(doc: MarginalDoc, dim: usize, base: &Path) -> Result<MarginalIntensity> {
    let m = match doc {
        MarginalDoc::UniformBall { mass } => MarginalIntensity::uniform(dim, mass)?,
        MarginalDoc::TruncGaussian { mean, kappa, mass } => {
            MarginalIntensity::trunc_gaussian(TruncGaussianSpec { mean, kappa, mass })?
        }
        MarginalDoc::Grid(g) => MarginalIntensity::grid(grid_from_doc(g, dim, MaskKind::Ball, base)?)?,
    };
    if m.dim() != dim {
        return Err(IdpgError::DimensionMismatch {
            expected: dim,
            got: m.dim(),
        });
    }
    Ok(m)
}

fn marginal_to_doc(m: &MarginalIntensity) -> MarginalDoc {
    match m {
        MarginalIntensity::UniformBall { mass, .. } => MarginalDoc::UniformBall { mass: *mass },
        MarginalIntensity::TruncGaussian(t) => {
            let s = t.spec().clone();
            MarginalDoc::TruncGaussian {
                mean: s.mean,
                kappa: s.kappa,
                mass: s.mass,
            }
        }
        MarginalIntensity::GridTabulated(g) => MarginalDoc::Grid(grid_to_doc(g)),
    }
}

fn model_from_doc(doc: ModelDoc, base: &Path) -> Result<IntensityModel> {
    let d = doc.dim;
    super::check_dim(d)?;
    match doc.body {
        ModelBody::Product { green, red } => IntensityModel::product(
            marginal_from_doc(green, d, base)?,
            marginal_from_doc(red, d, base)?,
        ),
        ModelBody::Mixture { components } => {
            let comps = components
                .into_iter()
                .map(|c| {
                    Ok(MixtureComponent {
                        label: c.label,
                        green: marginal_from_doc(c.green, d, base)?,
                        red: marginal_from_doc(c.red, d, base)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            IntensityModel::mixture(comps)
        }
        ModelBody::Tabulated { joint } => {
            if d != 1 {
                return invalid("tabulated joints require dim = 1");
            }
            IntensityModel::tabulated(grid_from_doc(joint, 2, MaskKind::Full, base)?)
        }
    }
}

fn model_to_doc(model: &IntensityModel) -> ModelDoc {
    let body = match model {
        IntensityModel::Product { green, red } => ModelBody::Product {
            green: marginal_to_doc(green),
            red: marginal_to_doc(red),
        },
        IntensityModel::Mixture { components } => ModelBody::Mixture {
            components: components
                .iter()
                .map(|c| ComponentDoc {
                    label: c.label.clone(),
                    green: marginal_to_doc(&c.green),
                    red: marginal_to_doc(&c.red),
                })
                .collect(),
        },
        IntensityModel::Tabulated { joint } => ModelBody::Tabulated {
            joint: grid_to_doc(joint),
        },
    };
    ModelDoc {
        dim: model.dim(),
        body,
    }
}

/// Parses a model; grid `file` references resolve against `base`.
pub fn model_from_json(value: serde_json::Value, base: &Path) -> Result<IntensityModel> {
    let doc: ModelDoc = serde_json::from_value(value)?;
    model_from_doc(doc, base)
}

/// Serializes a model with every grid inlined.
pub fn model_to_json(model: &IntensityModel) -> serde_json::Value {
    serde_json::to_value(model_to_doc(model)).expect("model documents always serialize")
}

pub fn load_model(path: &Path) -> Result<IntensityModel> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    model_from_json(value, path.parent().unwrap_or_else(|| Path::new(".")))
}

pub fn save_model(model: &IntensityModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&model_to_json(model))?;
    fs::write(path, text).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn product_round_trip() {
        let v = json!({
            "dim": 1, "kind": "product",
            "green": {"type": "uniform_ball", "mass": 2.0},
            "red": {"type": "trunc_gaussian", "mean": [0.5], "kappa": [40.0], "mass": 3.0}
        });
        let m = model_from_json(v, Path::new(".")).unwrap();
        assert_eq!(m.total_intensity(), 6.0);
        let back = model_from_json(model_to_json(&m), Path::new(".")).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn grid_file_reference() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridField::from_fn(1, 16, MaskKind::Ball, |x| 1.0 + x[0]).unwrap();
        g.save(&dir.path().join("green.json")).unwrap();
        let v = json!({
            "dim": 1, "kind": "product",
            "green": {"type": "grid", "file": "green.json"},
            "red": {"type": "uniform_ball", "mass": 1.0}
        });
        std::fs::write(dir.path().join("model.json"), v.to_string()).unwrap();
        let m = load_model(&dir.path().join("model.json")).unwrap();
        assert!((m.total_intensity() - 1.5).abs() < 1e-12);
        save_model(&m, &dir.path().join("copy.json")).unwrap();
        assert_eq!(load_model(&dir.path().join("copy.json")).unwrap(), m);
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let v = json!({
            "dim": 2, "kind": "product",
            "green": {"type": "trunc_gaussian", "mean": [0.5], "kappa": [40.0], "mass": 1.0},
            "red": {"type": "uniform_ball", "mass": 1.0}
        });
        assert!(model_from_json(v, Path::new(".")).is_err());
    }

    #[test]
    fn mixture_and_tabulated() {
        let v = json!({
            "dim": 1, "kind": "mixture",
            "components": [
                {"label": "a", "green": {"type": "uniform_ball", "mass": 1.0},
                 "red": {"type": "uniform_ball", "mass": 2.0}},
                {"label": "b", "green": {"type": "uniform_ball", "mass": 3.0},
                 "red": {"type": "uniform_ball", "mass": 1.0}}
            ]
        });
        let m = model_from_json(v, Path::new(".")).unwrap();
        assert_eq!(m.total_intensity(), 5.0);
        let t = json!({
            "dim": 1, "kind": "tabulated",
            "joint": {"points_per_axis": 2, "values": [1.0, 2.0, 3.0, 4.0]}
        });
        let m = model_from_json(t, Path::new(".")).unwrap();
        assert!((m.total_intensity() - 2.5).abs() < 1e-12);
    }
}
