//! Ready-made scenes used by the tests, the command line tool and the demo.

use crate::scene::{AxisSpec, GridSpec, MaterialBox, PortSpec, Scene, SweepDefaults, UniformAxis, WallSpec};
use crate::Z0_DEFAULT;

fn uniform(stop: f64, cells: usize) -> AxisSpec {
    AxisSpec::Uniform(UniformAxis { start: 0.0, stop, cells })
}

/// Empty PEC box of `dims` metres with `cells` uniform cells.
pub fn cavity(dims: [f64; 3], cells: [usize; 3]) -> Scene {
    Scene {
        grid: GridSpec {
            x: uniform(dims[0], cells[0]),
            y: uniform(dims[1], cells[1]),
            z: uniform(dims[2], cells[2]),
        },
        walls: WallSpec::default(),
        materials: Vec::new(),
        ports: Vec::new(),
        probes: Vec::new(),
        z0: Z0_DEFAULT,
        sweep: None,
    }
}

/// Parameters of the shielded microstrip line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Microstrip {
    /// Cells along x, y, z.
    pub cells: [usize; 3],
    /// Cell size in metres (uniform).
    pub h: f64,
    /// Substrate thickness in cells.
    pub substrate: usize,
    pub eps_r: f64,
    /// Strip width in cells (centred in y).
    pub width: usize,
    /// Distance between the strip ends and the x walls, in cells.
    pub margin: usize,
}

impl Microstrip {
    /// About 50k unknowns.
    pub fn standard() -> Microstrip {
        Microstrip {
            cells: [40, 24, 16],
            h: 1e-3,
            substrate: 2,
            eps_r: 2.7,
            width: 4,
            margin: 5,
        }
    }

    /// Small enough for the dense oracle.
    pub fn small() -> Microstrip {
        Microstrip {
            cells: [12, 8, 6],
            h: 1e-3,
            substrate: 2,
            eps_r: 2.7,
            width: 2,
            margin: 2,
        }
    }

    /// Scaled to roughly `n` unknowns with the standard proportions.
    pub fn with_unknowns(n: usize) -> Microstrip {
        let base = Microstrip::standard();
        let base_n = 3.0 * (41.0 * 25.0 * 17.0);
        let s = (n as f64 / base_n).cbrt();
        let scale = |c: usize| ((c as f64 * s).round() as usize).max(4);
        Microstrip {
            cells: base.cells.map(scale),
            h: base.h / s,
            substrate: scale(base.substrate).min(scale(base.cells[2]) / 2).max(1),
            width: scale(base.width).max(1),
            margin: scale(base.margin).max(1),
            ..base
        }
    }

    pub fn n_edges(&self) -> usize {
        3 * self.cells.iter().map(|c| c + 1).product::<usize>()
    }

    /// Port node paths `(x index, y index)` of the two vertical ports.
    pub fn port_columns(&self) -> [(usize, usize); 2] {
        let jc = self.cells[1] / 2;
        [(self.margin, jc), (self.cells[0] - self.margin, jc)]
    }

    pub fn scene(&self) -> Scene {
        let [nx, ny, nz] = self.cells;
        let h = self.h;
        let dims = [nx as f64 * h, ny as f64 * h, nz as f64 * h];
        let t = self.substrate as f64 * h;
        let j0 = ny / 2 - self.width / 2;
        let j1 = j0 + self.width;
        let mut substrate = MaterialBox::dielectric([0.0; 3], [dims[0], dims[1], t], self.eps_r);
        substrate.name = Some("substrate".into());
        let mut strip = MaterialBox::pec(
            [self.margin as f64 * h, j0 as f64 * h, t],
            [(nx - self.margin) as f64 * h, j1 as f64 * h, t],
        );
        strip.name = Some("strip".into());
        let ports = self
            .port_columns()
            .iter()
            .enumerate()
            .map(|(p, &(i, j))| PortSpec {
                name: format!("p{}", p + 1),
                nodes: (0..=self.substrate).map(|k| [i, j, k]).collect(),
                current: [1.0, 0.0],
            })
            .collect();
        Scene {
            grid: GridSpec {
                x: uniform(dims[0], nx),
                y: uniform(dims[1], ny),
                z: uniform(dims[2], nz),
            },
            walls: WallSpec::default(),
            materials: vec![substrate, strip],
            ports,
            probes: Vec::new(),
            z0: Z0_DEFAULT,
            sweep: Some(SweepDefaults {
                fmin: 1e9,
                fmax: 4e9,
                nf: 10,
            }),
        }
    }
}
