//! JSON scene files.
//!
//! All quantities are SI: coordinates in metres, conductivity in S/m,
//! frequencies in Hz. Material boxes are given in coordinates and snapped
//! to the nearest grid planes; ports and probes are node-index paths.
//!
//! ```json
//! {
//!   "grid": { "x": {"start": 0, "stop": 0.04, "cells": 40}, "y": [0, 0.01, 0.02], "z": [0, 0.001, 0.002] },
//!   "walls": { "zmax": "pmc" },
//!   "materials": [ { "min": [0, 0, 0], "max": [0.04, 0.02, 0.001], "eps_r": 2.7 } ],
//!   "ports": [ { "name": "p1", "nodes": [[5, 1, 0], [5, 1, 1]] } ],
//!   "sweep": { "fmin": 1e9, "fmax": 5e9, "nf": 41 }
//! }
//! ```

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FitError, Result};
use crate::grid::{Axis, Grid};
use crate::materials::{edge_mask, Boundary, MaterialMap, NodeBox, Walls};
use crate::ports::{EdgePath, Port};
use crate::Z0_DEFAULT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformAxis {
    pub start: f64,
    pub stop: f64,
    pub cells: usize,
}

/// Plane coordinates of one axis, explicit or uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    Planes(Vec<f64>),
    Uniform(UniformAxis),
}

impl AxisSpec {
    pub fn planes(&self) -> Vec<f64> {
        match self {
            AxisSpec::Planes(p) => p.clone(),
            AxisSpec::Uniform(u) => {
                let h = (u.stop - u.start) / u.cells as f64;
                (0..=u.cells)
                    .map(|i| if i == u.cells { u.stop } else { u.start + h * i as f64 })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x: AxisSpec,
    pub y: AxisSpec,
    pub z: AxisSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WallSpec {
    pub xmin: Boundary,
    pub xmax: Boundary,
    pub ymin: Boundary,
    pub ymax: Boundary,
    pub zmin: Boundary,
    pub zmax: Boundary,
}

impl WallSpec {
    pub fn walls(&self) -> Walls {
        Walls {
            lo: [self.xmin, self.ymin, self.zmin],
            hi: [self.xmax, self.ymax, self.zmax],
        }
    }
}

fn one() -> f64 {
    1.0
}

fn unit_current() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_z0() -> f64 {
    Z0_DEFAULT
}

/// Axis-aligned material block. Later blocks override earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialBox {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(default = "one")]
    pub eps_r: f64,
    /// Imaginary part of the relative permittivity (negative for loss).
    #[serde(default)]
    pub eps_r_imag: f64,
    #[serde(default = "one")]
    pub mu_r: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub pec: bool,
}

impl MaterialBox {
    pub fn dielectric(min: [f64; 3], max: [f64; 3], eps_r: f64) -> MaterialBox {
        MaterialBox {
            name: None,
            min,
            max,
            eps_r,
            eps_r_imag: 0.0,
            mu_r: 1.0,
            sigma: 0.0,
            pec: false,
        }
    }

    pub fn pec(min: [f64; 3], max: [f64; 3]) -> MaterialBox {
        MaterialBox {
            pec: true,
            ..MaterialBox::dielectric(min, max, 1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortSpec {
    pub name: String,
    pub nodes: Vec<[usize; 3]>,
    /// Impressed current `[re, im]` in amperes.
    #[serde(default = "unit_current")]
    pub current: [f64; 2],
}

/// Explicit voltage integration path for a port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub port: String,
    pub nodes: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDefaults {
    pub fmin: f64,
    pub fmax: f64,
    pub nf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub grid: GridSpec,
    #[serde(default)]
    pub walls: WallSpec,
    #[serde(default)]
    pub materials: Vec<MaterialBox>,
    #[serde(default)]
    pub ports: Vec<PortSpec>,
    #[serde(default)]
    pub probes: Vec<ProbeSpec>,
    #[serde(default = "default_z0")]
    pub z0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepDefaults>,
}

/// How one material box landed on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSnap {
    pub index: usize,
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    /// Largest distance between a requested face and its grid plane.
    pub distance: f64,
    /// Zero thickness along at least one axis after snapping.
    pub thin: bool,
    /// Thin non-PEC boxes occupy no cells and have no effect.
    pub ignored: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SnapReport {
    pub boxes: Vec<BoxSnap>,
}

impl SnapReport {
    pub fn max_distance(&self) -> f64 {
        self.boxes.iter().map(|b| b.distance).fold(0.0, f64::max)
    }

    pub fn lines(&self) -> Vec<String> {
        self.boxes
            .iter()
            .map(|b| {
                let mut s = format!(
                    "materials[{}]: nodes {:?}..{:?}, snap distance {:e} m",
                    b.index, b.lo, b.hi, b.distance
                );
                if b.ignored {
                    s.push_str(" (zero thickness, ignored)");
                } else if b.thin {
                    s.push_str(" (conducting sheet)");
                }
                s
            })
            .collect()
    }
}

/// A scene resolved against its grid.
#[derive(Debug, Clone)]
pub struct Model {
    pub scene: Scene,
    pub grid: Grid,
    pub materials: MaterialMap,
    pub walls: Walls,
    pub ports: Vec<Port>,
    pub z0: f64,
    pub snap: SnapReport,
    /// Eliminated edges.
    pub mask: Vec<bool>,
}

impl Model {
    pub fn require_ports(&self) -> Result<()> {
        if self.ports.is_empty() {
            return Err(FitError::scene("ports", "at least one port is required"));
        }
        Ok(())
    }

    pub fn n_unknowns(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }
}

/// Parses scene JSON; errors name the offending field and position.
pub fn parse_scene_str(text: &str) -> Result<Scene> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        FitError::scene(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
    })
}

pub fn parse_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_scene_str(&text).map_err(|e| match e {
        FitError::Scene { path: field, message } => FitError::Scene {
            path: format!("{}: {field}", path.display()),
            message,
        },
        other => other,
    })
}

/// Parses and resolves a scene file.
pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    parse_scene(path)?.compile()
}

impl Scene {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    /// Canonical form: explicit plane lists, everything else unchanged.
    pub fn normal_form(&self) -> Scene {
        let mut s = self.clone();
        s.grid = GridSpec {
            x: AxisSpec::Planes(self.grid.x.planes()),
            y: AxisSpec::Planes(self.grid.y.planes()),
            z: AxisSpec::Planes(self.grid.z.planes()),
        };
        s
    }

    pub fn build_grid(&self) -> Result<Grid> {
        for (name, spec) in [("grid.x", &self.grid.x), ("grid.y", &self.grid.y), ("grid.z", &self.grid.z)] {
            if let AxisSpec::Uniform(u) = spec {
                if u.cells == 0 || !(u.stop > u.start) {
                    return Err(FitError::scene(name, "need cells >= 1 and stop > start"));
                }
            }
        }
        Grid::new(self.grid.x.planes(), self.grid.y.planes(), self.grid.z.planes())
            .map_err(|e| FitError::scene("grid", e.to_string()))
    }

    /// Resolves geometry, materials and ports against the grid.
    pub fn compile(&self) -> Result<Model> {
        let grid = self.build_grid()?;
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return Err(FitError::scene("z0", format!("must be positive, got {}", self.z0)));
        }
        if let Some(sw) = &self.sweep {
            if !(sw.fmin > 0.0) || sw.fmax < sw.fmin || sw.nf == 0 {
                return Err(FitError::scene("sweep", "need 0 < fmin <= fmax and nf >= 1"));
            }
        }
        let (lo_b, hi_b) = grid.bounds();
        let mut map = MaterialMap::vacuum(&grid);
        let mut snap = SnapReport::default();
        for (index, mb) in self.materials.iter().enumerate() {
            let field = format!("materials[{index}]");
            let mut lo = [0usize; 3];
            let mut hi = [0usize; 3];
            let mut distance = 0.0f64;
            for a in Axis::ALL {
                let i = a.index();
                let tol = 1e-9 * (hi_b[i] - lo_b[i]);
                if !(mb.min[i].is_finite() && mb.max[i].is_finite()) || mb.min[i] > mb.max[i] {
                    return Err(FitError::scene(
                        format!("{field}.min"),
                        format!("min must not exceed max along {}", a.name()),
                    ));
                }
                if mb.min[i] < lo_b[i] - tol || mb.max[i] > hi_b[i] + tol {
                    return Err(FitError::scene(
                        format!("{field}.max"),
                        format!(
                            "box [{}, {}] leaves the grid [{}, {}] along {}",
                            mb.min[i],
                            mb.max[i],
                            lo_b[i],
                            hi_b[i],
                            a.name()
                        ),
                    ));
                }
                let (l, dl) = grid.snap(a, mb.min[i]);
                let (h, dh) = grid.snap(a, mb.max[i]);
                lo[i] = l;
                hi[i] = h;
                distance = distance.max(dl).max(dh);
            }
            if mb.eps_r < 1.0 || mb.mu_r <= 0.0 || mb.sigma < 0.0 {
                return Err(FitError::scene(
                    field,
                    "need eps_r >= 1, mu_r > 0 and sigma >= 0",
                ));
            }
            let thin = (0..3).any(|a| lo[a] == hi[a]);
            let ignored = thin && !mb.pec;
            if thin && mb.pec {
                map.pec_sheets.push(NodeBox { lo, hi });
            } else if !thin {
                for k in lo[2]..hi[2] {
                    for j in lo[1]..hi[1] {
                        for i in lo[0]..hi[0] {
                            let c = [i, j, k];
                            if mb.pec {
                                map.set_pec(c);
                            } else {
                                map.set_cell(
                                    c,
                                    Complex64::new(mb.eps_r, mb.eps_r_imag),
                                    Complex64::new(mb.mu_r, 0.0),
                                    mb.sigma,
                                );
                            }
                        }
                    }
                }
            }
            snap.boxes.push(BoxSnap {
                index,
                lo,
                hi,
                distance,
                thin,
                ignored,
            });
        }
        map.validate(&grid)?;
        let walls = self.walls.walls();
        let mask = edge_mask(&grid, &map, &walls);
        let mut ports = Vec::with_capacity(self.ports.len());
        for (i, ps) in self.ports.iter().enumerate() {
            let field = format!("ports[{i}]");
            if self.ports[..i].iter().any(|p| p.name == ps.name) {
                return Err(FitError::scene(format!("{field}.name"), format!("duplicate port '{}'", ps.name)));
            }
            let path = EdgePath::from_nodes(&grid, &ps.nodes)
                .map_err(|e| FitError::scene(format!("{field}.nodes"), e.to_string()))?;
            let mut port = Port::new(ps.name.clone(), path);
            port.current = Complex64::new(ps.current[0], ps.current[1]);
            if port.current.norm() == 0.0 {
                return Err(FitError::scene(format!("{field}.current"), "current must be nonzero"));
            }
            ports.push(port);
        }
        for (i, pr) in self.probes.iter().enumerate() {
            let field = format!("probes[{i}]");
            let Some(port) = ports.iter_mut().find(|p| p.name == pr.port) else {
                return Err(FitError::scene(format!("{field}.port"), format!("no port named '{}'", pr.port)));
            };
            let path = EdgePath::from_nodes(&grid, &pr.nodes)
                .map_err(|e| FitError::scene(format!("{field}.nodes"), e.to_string()))?;
            port.probe = Some(path);
        }
        for (i, port) in ports.iter().enumerate() {
            port.validate(&mask)
                .map_err(|e| FitError::scene(format!("ports[{i}]"), e.to_string()))?;
        }
        Ok(Model {
            scene: self.clone(),
            grid,
            materials: map,
            walls,
            ports,
            z0: self.z0,
            snap,
            mask,
        })
    }
}
