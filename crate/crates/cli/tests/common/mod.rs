#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gsar::simkit::{simulate_dataset, SimScenario};
use gsar::weights::{rook_adjacency, write_edge_list, write_gal};
use gsar::{FamilySpec, FitData};

pub struct Run {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

pub fn gsar(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("gsar").chain(args.iter().copied());
    let code = gsar_cli::main_with_args(argv, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes `y,x1,x2[,m]`; binomial responses as success counts when
/// `counts` is set, proportions otherwise.
pub fn write_data(dir: &Path, name: &str, data: &FitData, counts: bool) -> PathBuf {
    let binomial = data.trials.iter().any(|&m| m != 1.0) || counts;
    let mut text = String::from(if binomial { "y,x1,x2,m\n" } else { "y,x1,x2\n" });
    for i in 0..data.n() {
        let y = if counts { (data.y[i] * data.trials[i]).round() } else { data.y[i] };
        write!(text, "{:?},{:?},{:?}", y, data.x[(i, 1)], data.x[(i, 2)]).unwrap();
        if binomial {
            write!(text, ",{:?}", data.trials[i]).unwrap();
        }
        text.push('\n');
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Binary rook adjacency of a grid, as an edge list or GAL file.
pub fn write_grid_weights(dir: &Path, rows: usize, cols: usize, gal: bool) -> PathBuf {
    let w = rook_adjacency(rows, cols).unwrap();
    let (name, text) = if gal {
        (format!("grid{rows}x{cols}.gal"), write_gal(&w))
    } else {
        (format!("grid{rows}x{cols}.txt"), write_edge_list(&w))
    };
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Replicate 0 of a seeded grid scenario.
pub fn simulated(spec: FamilySpec, rows: usize, cols: usize, rho: f64, seed: u64) -> FitData {
    let scn = SimScenario::new(spec, rows, cols, rho, seed);
    simulate_dataset(&scn, 0).unwrap().0.data
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
