use std::collections::BTreeMap;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{Error, Result};

/// Electromagnetic parameters of one material.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Relative permittivity, >= 1.
    pub eps: f64,
    /// Conductivity [S/m], > 0.
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Wall {
    pub a: Point,
    pub b: Point,
    pub material: usize,
}

impl Wall {
    pub fn length(&self) -> f64 {
        let d = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        d[0].hypot(d[1])
    }

    /// Unit normal (left-hand of a -> b).
    pub fn normal(&self) -> [f64; 2] {
        let l = self.length();
        [-(self.b[1] - self.a[1]) / l, (self.b[0] - self.a[0]) / l]
    }
}

/// 2D scene of reflective wall segments. Both faces of every wall reflect.
///
/// Materials are indexed by their position in name order.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    walls: Vec<Wall>,
    material_names: Vec<String>,
    materials: Vec<MaterialParams>,
}

#[derive(Serialize, Deserialize)]
struct WallFile {
    a: Point,
    b: Point,
    material: String,
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    walls: Vec<WallFile>,
    materials: BTreeMap<String, MaterialParams>,
}

impl Scene {
    pub fn new(walls: Vec<Wall>, materials: Vec<(String, MaterialParams)>) -> Result<Self> {
        let mut materials = materials;
        materials.sort_by(|a, b| a.0.cmp(&b.0));
        let scene = Scene {
            walls,
            material_names: materials.iter().map(|m| m.0.clone()).collect(),
            materials: materials.into_iter().map(|m| m.1).collect(),
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn empty() -> Self {
        Scene {
            walls: Vec::new(),
            material_names: Vec::new(),
            materials: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        for w in self.material_names.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Validation(format!("duplicate material {:?}", w[0])));
            }
        }
        for (i, m) in self.materials.iter().enumerate() {
            if !(m.eps >= 1.0 && m.sigma > 0.0 && m.eps.is_finite() && m.sigma.is_finite()) {
                return Err(Error::Validation(format!(
                    "material {:?} needs eps >= 1 and sigma > 0, got {m:?}",
                    self.material_names[i]
                )));
            }
        }
        for (i, w) in self.walls.iter().enumerate() {
            if !w.a.iter().chain(w.b.iter()).all(|v| v.is_finite()) {
                return Err(Error::Validation(format!("wall {i} has non-finite coordinates")));
            }
            if !(w.length() > 0.0) {
                return Err(Error::Validation(format!("wall {i} has zero length")));
            }
            if w.material >= self.materials.len() {
                return Err(Error::Validation(format!(
                    "wall {i} references material {} but only {} exist",
                    w.material,
                    self.materials.len()
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SceneFile = serde_json::from_str(text)?;
        let names: Vec<String> = file.materials.keys().cloned().collect();
        let mut walls = Vec::with_capacity(file.walls.len());
        for (i, w) in file.walls.into_iter().enumerate() {
            let material = names.iter().position(|n| *n == w.material).ok_or_else(|| {
                Error::Validation(format!("wall {i} uses unknown material {:?}", w.material))
            })?;
            walls.push(Wall { a: w.a, b: w.b, material });
        }
        Scene::new(walls, file.materials.into_iter().collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SceneFile {
            walls: self
                .walls
                .iter()
                .map(|w| WallFile {
                    a: w.a,
                    b: w.b,
                    material: self.material_names[w.material].clone(),
                })
                .collect(),
            materials: self
                .material_names
                .iter()
                .cloned()
                .zip(self.materials.iter().copied())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scene::from_json(&text).map_err(|e| e.context(format!("scene {}", path.display())))
    }

    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }

    pub fn materials(&self) -> &[MaterialParams] {
        &self.materials
    }

    pub fn material_names(&self) -> &[String] {
        &self.material_names
    }

    pub fn material_index(&self, name: &str) -> Option<usize> {
        self.material_names.iter().position(|n| n == name)
    }

    /// Same geometry, different material parameters.
    pub fn with_materials(&self, materials: &[MaterialParams]) -> Result<Scene> {
        if materials.len() != self.materials.len() {
            return Err(Error::Validation(format!(
                "expected {} materials, got {}",
                self.materials.len(),
                materials.len()
            )));
        }
        let mut out = self.clone();
        out.materials = materials.to_vec();
        out.validate()?;
        Ok(out)
    }

    /// Applies a rigid map to every wall endpoint.
    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> Scene {
        let mut out = self.clone();
        for w in &mut out.walls {
            w.a = f(w.a);
            w.b = f(w.b);
        }
        out
    }
}
