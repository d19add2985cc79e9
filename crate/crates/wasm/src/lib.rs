//! Browser bindings: the hexagon factorization, cyclic polygon factorizations and separation rows.
//!
//! Each binding returns a JSON string. The `*_json` functions hold the logic and run natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;
use xcforge::cyclic::{arc_blocks, clustered_angles, make_cyclic_polygon, uniform_angles, xc_factorize_cyclic, CyclicConfig};
use xcforge::demo::hexagon_demo;
use xcforge::rng::substream;
use xcforge::separation::separation_row;

/// Largest polygon the page factorizes; bigger ones stall the tab.
pub const MAX_CYCLIC_N: usize = 3000;

/// Largest `r` for the separation row.
pub const MAX_SEPARATION_R: u32 = 512;

#[derive(Serialize)]
struct CyclicView {
    n: usize,
    model: String,
    angles: Vec<f64>,
    arcs: usize,
    colors: usize,
    r_total: usize,
    bound_24: f64,
    rel_err: f64,
    /// Arc index of the edge from vertex `i` to vertex `i + 1`.
    arc_of_edge: Vec<usize>,
}

pub fn hexagon_json(seed: u64) -> Result<String, String> {
    let (_, rep) = hexagon_demo(seed).map_err(|e| e.to_string())?;
    serde_json::to_string(&rep).map_err(|e| e.to_string())
}

pub fn cyclic_json(n: usize, model: &str, seed: u64) -> Result<String, String> {
    if !(3..=MAX_CYCLIC_N).contains(&n) {
        return Err(format!("n must lie in 3..={MAX_CYCLIC_N}"));
    }
    let mut rng = substream(seed, "angles", 0);
    let angles = match model {
        "uniform" => uniform_angles(n, &mut rng),
        "clustered" => clustered_angles(n, &mut rng),
        _ => return Err(format!("unknown model `{model}`")),
    };
    let p = make_cyclic_polygon(&angles).map_err(|e| e.to_string())?;
    let (_, rep) = xc_factorize_cyclic(&p, &CyclicConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
    let mut arc_of_edge = vec![0; n];
    let arcs = arc_blocks(&p).map_err(|e| e.to_string())?;
    for a in &arcs {
        for &f in &a.facets {
            arc_of_edge[f] = a.id;
        }
    }
    let view = CyclicView {
        n,
        model: model.into(),
        angles,
        arcs: arcs.len(),
        colors: rep.colors,
        r_total: rep.r_total,
        bound_24: rep.bound_24,
        rel_err: rep.verify.rel_err,
        arc_of_edge,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

pub fn separation_json(r: u32) -> Result<String, String> {
    if !(1..=MAX_SEPARATION_R).contains(&r) {
        return Err(format!("r must lie in 1..={MAX_SEPARATION_R}"));
    }
    let row = separation_row(r).map_err(|e| e.to_string())?;
    serde_json::to_string(&row).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn hexagon(seed: u32) -> Result<String, JsValue> {
    hexagon_json(seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn cyclic(n: u32, model: &str, seed: u32) -> Result<String, JsValue> {
    cyclic_json(n as usize, model, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn separation(r: u32) -> Result<String, JsValue> {
    separation_json(r).map_err(|e| JsValue::from_str(&e))
}
