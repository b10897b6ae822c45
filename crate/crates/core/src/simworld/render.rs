use serde::{Deserialize, Serialize};

use super::town::{RenderConfig, TownConfig};
use super::world::{Nuisance, Side, WorldState};

pub const ROAD_INTENSITY: f64 = 0.1;
pub const CAR_INTENSITY: f64 = 1.0;
pub const EGO_INTENSITY: f64 = 0.75;
pub const NUISANCE_INTENSITY: f64 = 0.1;
pub const RED_INTENSITY: f64 = 1.0;
pub const GREEN_INTENSITY: f64 = 0.4;

/// Square single-channel raster, row-major, row 0 is the far end ahead of the ego.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub side: usize,
    pub pixels: Vec<f64>,
}

impl Observation {
    pub fn zeros(side: usize) -> Self {
        Self { side, pixels: vec![0.0; side * side] }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.side + col]
    }

    fn paint_max(&mut self, row: usize, col: usize, value: f64) {
        let px = &mut self.pixels[row * self.side + col];
        if value > *px {
            *px = value;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarBox {
    pub s: f64,
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightMark {
    pub s: f64,
    pub red: bool,
}

/// Everything dynamic the renderer needs at one tick, restricted to the
/// visible window. Static scenery comes from the episode's nuisance list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub ego_s: f64,
    pub cars: Vec<CarBox>,
    pub lights: Vec<LightMark>,
}

impl Frame {
    pub fn capture(world: &WorldState) -> Self {
        let reach = 0.5 * world.town.render.window_m + world.town.params.car_length;
        let ego_s = world.ego.s;
        let cars = world
            .others
            .iter()
            .filter(|c| (c.s - ego_s).abs() <= reach)
            .map(|c| CarBox { s: c.s, length: c.length })
            .collect();
        let lights = world
            .town
            .light_positions
            .iter()
            .zip(&world.lights)
            .filter(|(&p, _)| (p - ego_s).abs() <= reach)
            .map(|(&s, &red)| LightMark { s, red })
            .collect();
        Frame { ego_s, cars, lights }
    }
}

/// Lateral extent and size of each scenery style: (inner edge offset, width, length).
fn nuisance_geometry(style: u8) -> (f64, f64, f64) {
    match style {
        0 => (5.0, 1.25, 1.25),
        1 => (5.5, 2.5, 2.5),
        2 => (5.0, 1.25, 5.0),
        3 => (6.0, 5.0, 5.0),
        4 => (5.0, 1.25, 10.0),
        _ => (5.0, 1.25, 1.25),
    }
}

struct Raster<'a> {
    cfg: &'a RenderConfig,
    curvature: f64,
    obs: Observation,
}

impl Raster<'_> {
    fn lateral_offset(&self, ds: f64) -> f64 {
        0.5 * self.curvature * ds * ds
    }

    /// Fill an axis-aligned box given in metres (lateral x, longitudinal ds
    /// relative to the ego), weighting each pixel by its covered fraction.
    fn fill_box(&mut self, x0: f64, x1: f64, ds0: f64, ds1: f64, intensity: f64) {
        let side = self.cfg.grid_side;
        let mpp = self.cfg.meters_per_pixel();
        let half = side as f64 / 2.0;
        let (c0, c1) = (half + x0 / mpp, half + x1 / mpp);
        let (r0, r1) = (half - ds1 / mpp, half - ds0 / mpp);
        let row_lo = r0.floor().max(0.0) as usize;
        let row_hi = (r1.ceil().min(side as f64)).max(0.0) as usize;
        let col_lo = c0.floor().max(0.0) as usize;
        let col_hi = (c1.ceil().min(side as f64)).max(0.0) as usize;
        for row in row_lo..row_hi {
            let fy = (r1.min(row as f64 + 1.0) - r0.max(row as f64)).max(0.0);
            if fy == 0.0 {
                continue;
            }
            for col in col_lo..col_hi {
                let fx = (c1.min(col as f64 + 1.0) - c0.max(col as f64)).max(0.0);
                if fx > 0.0 {
                    self.obs.paint_max(row, col, intensity * fx * fy);
                }
            }
        }
    }

    fn road(&mut self) {
        let side = self.cfg.grid_side;
        let mpp = self.cfg.meters_per_pixel();
        let half_w = 0.5 * self.cfg.lane_width;
        for row in 0..side {
            let ds = (side as f64 / 2.0 - (row as f64 + 0.5)) * mpp;
            let x = self.lateral_offset(ds);
            let top = (side as f64 / 2.0 - row as f64) * mpp;
            self.fill_box(x - half_w, x + half_w, top - mpp, top, ROAD_INTENSITY);
        }
    }

    fn car(&mut self, ds: f64, length: f64, width: f64, intensity: f64) {
        let x = self.lateral_offset(ds);
        self.fill_box(x - 0.5 * width, x + 0.5 * width, ds - 0.5 * length, ds + 0.5 * length, intensity);
    }
}

/// Render a captured frame.
pub fn render_frame(town: &TownConfig, nuisances: &[Nuisance], frame: &Frame) -> Observation {
    let cfg = &town.render;
    let mut r = Raster { cfg, curvature: town.curvature_at(frame.ego_s), obs: Observation::zeros(cfg.grid_side) };
    let reach = 0.5 * cfg.window_m + 12.0;
    let mpp = cfg.meters_per_pixel();
    let half_lane = 0.5 * cfg.lane_width;

    r.road();

    let lo = nuisances.partition_point(|n| n.s < frame.ego_s - reach);
    for n in nuisances[lo..].iter().take_while(|n| n.s <= frame.ego_s + reach) {
        let (inner, width, length) = nuisance_geometry(n.style);
        let ds = n.s - frame.ego_s;
        let x = r.lateral_offset(ds);
        let (x0, x1) = match n.side {
            Side::Left => (x - inner - width, x - inner),
            Side::Right => (x + inner, x + inner + width),
        };
        r.fill_box(x0, x1, ds - 0.5 * length, ds + 0.5 * length, NUISANCE_INTENSITY);
    }

    // Signals snap to a single full-intensity cell beside the lane.
    let side = cfg.grid_side as f64;
    for l in &frame.lights {
        let ds = l.s - frame.ego_s;
        let x = r.lateral_offset(ds) - half_lane - 0.5 * mpp;
        let row = (side / 2.0 - ds / mpp).floor();
        let col = (side / 2.0 + x / mpp).floor();
        if (0.0..side).contains(&row) && (0.0..side).contains(&col) {
            let value = if l.red { RED_INTENSITY } else { GREEN_INTENSITY };
            r.obs.paint_max(row as usize, col as usize, value);
        }
    }

    let width = town.params.car_width;
    for c in &frame.cars {
        r.car(c.s - frame.ego_s, c.length, width, CAR_INTENSITY);
    }
    r.car(0.0, town.params.car_length, width, EGO_INTENSITY);
    r.obs
}

/// Ego-centred bird-eye view of the world.
pub fn render(world: &WorldState) -> Observation {
    render_frame(&world.town, &world.nuisances, &Frame::capture(world))
}

/// Columns covering the lane and the signal markers beside it: the region
/// where traffic-relevant agents appear in a straight-road frame.
pub fn agent_region_mask(cfg: &RenderConfig) -> Vec<bool> {
    let side = cfg.grid_side;
    let mpp = cfg.meters_per_pixel();
    let limit = 0.5 * cfg.lane_width + mpp + 1e-9;
    let mut mask = vec![false; side * side];
    for col in 0..side {
        let x = (col as f64 + 0.5 - side as f64 / 2.0) * mpp;
        if x.abs() <= limit {
            for row in 0..side {
                mask[row * side + col] = true;
            }
        }
    }
    mask
}
