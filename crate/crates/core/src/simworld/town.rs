use serde::{Deserialize, Serialize};

use super::SimError;

/// Vehicle dynamics and expert-rule constants shared by every car in a town.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub dt: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub b_max: f64,
    pub d_min: f64,
    pub k_gap: f64,
    pub car_length: f64,
    pub car_width: f64,
    /// Distance kept between a stopped front bumper and a red stop line.
    pub stop_margin: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            v_max: 12.0,
            a_max: 3.0,
            b_max: 6.0,
            d_min: 5.0,
            k_gap: 0.6,
            car_length: 4.0,
            car_width: 2.5,
            stop_margin: 1.0,
        }
    }
}

/// Bird-eye raster geometry. The window is square and ego-centred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub grid_side: usize,
    pub window_m: f64,
    pub lane_width: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { grid_side: 32, window_m: 40.0, lane_width: 3.75 }
    }
}

impl RenderConfig {
    pub fn meters_per_pixel(&self) -> f64 {
        self.window_m / self.grid_side as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightCycle {
    pub red: f64,
    pub green: f64,
    pub offset: f64,
}

impl LightCycle {
    pub fn is_red(&self, time: f64) -> bool {
        let period = self.red + self.green;
        if period <= 0.0 {
            return false;
        }
        (time + self.offset).rem_euclid(period) < self.red
    }
}

/// A procedural town: route geometry, signals, traffic and scenery statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TownConfig {
    pub town_id: String,
    pub route_length: f64,
    pub light_positions: Vec<f64>,
    pub light_cycles: Vec<LightCycle>,
    /// Expected cars per 100 m.
    pub traffic_density: f64,
    /// Expected roadside objects per 100 m.
    pub nuisance_density: f64,
    pub cruise_speed: f64,
    /// Per-segment curvature (1/m), segments evenly split the route. Render only.
    pub curvature_profile: Vec<f64>,
    /// Other cars cruise at a uniform fraction of `cruise_speed` in this range.
    pub traffic_speed_range: (f64, f64),
    /// Fraction of other cars that make one stop somewhere along the route.
    pub stopper_fraction: f64,
    /// Dwell time range for stopping cars, seconds.
    pub dwell_range: (f64, f64),
    /// Scenery style codes that may appear in this town.
    pub nuisance_styles: Vec<u8>,
    #[serde(default)]
    pub params: SimParams,
    #[serde(default)]
    pub render: RenderConfig,
}

impl TownConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(format!("{}: {m}", self.town_id)));
        if !(self.route_length > 0.0) {
            return bad("route_length must be positive");
        }
        if self.light_positions.len() != self.light_cycles.len() {
            return bad("one cycle per light required");
        }
        if self.light_positions.iter().any(|&p| !(0.0..=self.route_length).contains(&p)) {
            return bad("light position outside route");
        }
        if self.traffic_density < 0.0 || self.nuisance_density < 0.0 {
            return bad("densities must be non-negative");
        }
        if !(self.cruise_speed > 0.0) {
            return bad("cruise speed must be positive");
        }
        if self.cruise_speed > self.params.v_max {
            return bad("cruise speed above v_max");
        }
        if self.nuisance_styles.is_empty() && self.nuisance_density > 0.0 {
            return bad("nuisance styles empty");
        }
        Ok(())
    }

    /// Curvature of the segment containing arc length `s`.
    pub fn curvature_at(&self, s: f64) -> f64 {
        let n = self.curvature_profile.len();
        if n == 0 {
            return 0.0;
        }
        let seg = self.route_length / n as f64;
        let idx = ((s / seg).floor().max(0.0) as usize).min(n - 1);
        self.curvature_profile[idx]
    }

    /// Training town: moderate traffic, gentle bends.
    pub fn town_a() -> Self {
        Self {
            town_id: "town-a".into(),
            route_length: 600.0,
            light_positions: vec![110.0, 260.0, 400.0, 530.0],
            light_cycles: vec![
                LightCycle { red: 12.0, green: 14.0, offset: 0.0 },
                LightCycle { red: 15.0, green: 12.0, offset: 6.0 },
                LightCycle { red: 10.0, green: 16.0, offset: 11.0 },
                LightCycle { red: 14.0, green: 12.0, offset: 3.0 },
            ],
            traffic_density: 1.6,
            nuisance_density: 6.0,
            cruise_speed: 7.0,
            curvature_profile: vec![0.0, 0.004, -0.003, 0.0, 0.005, -0.004, 0.002, 0.0],
            traffic_speed_range: (0.45, 0.85),
            stopper_fraction: 0.35,
            dwell_range: (4.0, 12.0),
            nuisance_styles: vec![0, 1, 2],
            params: SimParams::default(),
            render: RenderConfig::default(),
        }
    }

    /// Mild shift: different light timing and traffic mix.
    pub fn town_b() -> Self {
        Self {
            town_id: "town-b".into(),
            light_positions: vec![90.0, 220.0, 330.0, 470.0],
            light_cycles: vec![
                LightCycle { red: 16.0, green: 10.0, offset: 4.0 },
                LightCycle { red: 12.0, green: 12.0, offset: 9.0 },
                LightCycle { red: 14.0, green: 10.0, offset: 0.0 },
                LightCycle { red: 11.0, green: 13.0, offset: 7.0 },
            ],
            traffic_density: 2.2,
            nuisance_density: 8.0,
            curvature_profile: vec![0.003, -0.005, 0.0, 0.004, 0.0, -0.002, 0.005, -0.003],
            stopper_fraction: 0.45,
            ..Self::town_a()
        }
    }

    /// Strong shift: dense traffic, sharp bends, new scenery styles.
    pub fn town_c() -> Self {
        Self {
            town_id: "town-c".into(),
            light_positions: vec![70.0, 160.0, 250.0, 360.0, 470.0],
            light_cycles: vec![
                LightCycle { red: 18.0, green: 9.0, offset: 13.0 },
                LightCycle { red: 9.0, green: 15.0, offset: 2.0 },
                LightCycle { red: 17.0, green: 10.0, offset: 20.0 },
                LightCycle { red: 12.0, green: 12.0, offset: 5.0 },
                LightCycle { red: 15.0, green: 9.0, offset: 16.0 },
            ],
            traffic_density: 3.0,
            nuisance_density: 10.0,
            curvature_profile: vec![0.012, -0.015, 0.01, -0.012, 0.015, -0.01, 0.013, -0.014],
            traffic_speed_range: (0.35, 0.8),
            stopper_fraction: 0.55,
            dwell_range: (5.0, 14.0),
            nuisance_styles: vec![0, 1, 2, 3, 4],
            ..Self::town_a()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "a" | "town-a" => Some(Self::town_a()),
            "b" | "town-b" => Some(Self::town_b()),
            "c" | "town-c" => Some(Self::town_c()),
            _ => None,
        }
    }
}

/// One navigation task: a town, a start and a goal along its route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub town: TownConfig,
    pub start_s: f64,
    pub goal_s: f64,
    pub timeout: f64,
    pub seed: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        self.town.validate()?;
        if !(0.0 <= self.start_s && self.start_s < self.goal_s && self.goal_s <= self.town.route_length) {
            return Err(SimError::InvalidTask(format!(
                "start {} / goal {} outside route [0, {}]",
                self.start_s, self.goal_s, self.town.route_length
            )));
        }
        if !(self.timeout > 0.0) {
            return Err(SimError::InvalidTask("timeout must be positive".into()));
        }
        Ok(())
    }
}
