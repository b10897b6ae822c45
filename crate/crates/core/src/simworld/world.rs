use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::expert::rule_target_speed;
use super::town::{TaskSpec, TownConfig};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopPhase {
    Approaching,
    Dwelling { remaining: f64 },
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Behavior {
    Cruise {
        cruise: f64,
    },
    /// Cruises, then stops with its front bumper at `stop_at`. The dwell time
    /// is drawn from the world generator when the stop begins.
    Stopper {
        cruise: f64,
        stop_at: f64,
        phase: StopPhase,
    },
}

impl Behavior {
    pub fn cruise(&self) -> f64 {
        match *self {
            Behavior::Cruise { cruise } | Behavior::Stopper { cruise, .. } => cruise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    /// Arc length of the car centre.
    pub s: f64,
    pub v: f64,
    pub length: f64,
    pub behavior: Behavior,
}

impl Vehicle {
    pub fn front(&self) -> f64 {
        self.s + 0.5 * self.length
    }
    pub fn rear(&self) -> f64 {
        self.s - 0.5 * self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nuisance {
    pub s: f64,
    pub side: Side,
    pub style: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ego {
    pub s: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepEvents {
    pub collided: bool,
    pub arrived: bool,
    pub timed_out: bool,
}

impl StepEvents {
    pub fn terminal(&self) -> bool {
        self.collided || self.arrived || self.timed_out
    }
}

/// Throttle and brake in [0, 1]; at most one of them is non-zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub throttle: f64,
    pub brake: f64,
}

impl ControlCommand {
    pub const IDLE: ControlCommand = ControlCommand { throttle: 0.0, brake: 0.0 };

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.throttle) && (0.0..=1.0).contains(&self.brake) && self.throttle * self.brake == 0.0
    }
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub town: Arc<TownConfig>,
    pub goal_s: f64,
    pub timeout: f64,
    pub tick: u64,
    pub ego: Ego,
    /// Other cars sorted by ascending position.
    pub others: Vec<Vehicle>,
    /// Current colour of every light, `true` = red.
    pub lights: Vec<bool>,
    pub nuisances: Vec<Nuisance>,
    pub rng: ChaCha8Rng,
    pub done: bool,
}

impl WorldState {
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.town.params.dt
    }

    pub fn ego_vehicle(&self) -> Vehicle {
        Vehicle {
            s: self.ego.s,
            v: self.ego.v,
            length: self.town.params.car_length,
            behavior: Behavior::Cruise { cruise: self.town.cruise_speed },
        }
    }

    /// Nearest car whose rear is ahead of the ego centre.
    pub fn lead(&self) -> Option<&Vehicle> {
        self.others.iter().find(|c| c.s > self.ego.s)
    }

    /// Nearest car behind the ego centre.
    pub fn rear(&self) -> Option<&Vehicle> {
        self.others.iter().rev().find(|c| c.s <= self.ego.s)
    }

    pub fn gap_to_lead(&self) -> Option<f64> {
        let front = self.ego.s + 0.5 * self.town.params.car_length;
        self.lead().map(|c| c.rear() - front)
    }

    pub fn rear_gap(&self) -> Option<f64> {
        let back = self.ego.s - 0.5 * self.town.params.car_length;
        self.rear().map(|c| back - c.front())
    }

    /// Distance from the ego front bumper to the nearest red stop line ahead.
    pub fn red_light_distance(&self) -> Option<f64> {
        let front = self.ego.s + 0.5 * self.town.params.car_length;
        nearest_red_ahead(&self.town, &self.lights, front)
    }
}

pub(crate) fn nearest_red_ahead(town: &TownConfig, lights: &[bool], front: f64) -> Option<f64> {
    town.light_positions
        .iter()
        .zip(lights)
        .filter(|(&p, &red)| red && p > front)
        .map(|(&p, _)| p - front)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))))
}

fn light_colors(town: &TownConfig, time: f64) -> Vec<bool> {
    town.light_cycles.iter().map(|c| c.is_red(time)).collect()
}

/// Build the initial world for a task. Identical tasks give identical worlds.
pub fn init_world(task: &TaskSpec) -> Result<WorldState, SimError> {
    task.validate()?;
    let town = Arc::new(task.town.clone());
    let p = town.params;
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed);
    let ego_s = task.start_s;
    let spacing = p.car_length + p.d_min;

    let mut positions = poisson_positions(&mut rng, town.traffic_density, town.route_length);
    positions.sort_by(f64::total_cmp);
    let mut others: Vec<Vehicle> = Vec::with_capacity(positions.len());
    for s in positions {
        if (s - ego_s).abs() < spacing + 1.0 {
            continue;
        }
        if others.last().is_some_and(|prev| s - prev.s < spacing + 1.0) {
            continue;
        }
        let (lo, hi) = town.traffic_speed_range;
        let cruise = town.cruise_speed * rng.random_range(lo..=hi);
        let behavior = if rng.random::<f64>() < town.stopper_fraction {
            let stop_at = s + rng.random_range(20.0..(town.route_length * 0.8).max(40.0));
            Behavior::Stopper { cruise, stop_at, phase: StopPhase::Approaching }
        } else {
            Behavior::Cruise { cruise }
        };
        others.push(Vehicle { s, v: 0.0, length: p.car_length, behavior });
    }

    let mut nuisances = Vec::new();
    let scenery_span = town.route_length + town.render.window_m;
    for s in poisson_positions(&mut rng, town.nuisance_density, scenery_span) {
        let side = if rng.random::<bool>() { Side::Left } else { Side::Right };
        let style = town.nuisance_styles[rng.random_range(0..town.nuisance_styles.len())];
        nuisances.push(Nuisance { s: s - 0.5 * town.render.window_m, side, style });
    }
    nuisances.sort_by(|a, b| a.s.total_cmp(&b.s));

    let lights = light_colors(&town, 0.0);
    let mut world = WorldState {
        town,
        goal_s: task.goal_s,
        timeout: task.timeout,
        tick: 0,
        ego: Ego { s: ego_s, v: 0.0 },
        others,
        lights,
        nuisances,
        rng,
        done: false,
    };
    // Settle initial speeds to what each car's rule allows in its starting scene.
    let targets = other_targets(&world);
    for (car, target) in world.others.iter_mut().zip(targets) {
        car.v = target.min(car.behavior.cruise());
    }
    Ok(world)
}

fn poisson_positions(rng: &mut ChaCha8Rng, density: f64, span: f64) -> Vec<f64> {
    let mean = density * span / 100.0;
    if mean <= 0.0 {
        return Vec::new();
    }
    let n = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
    (0..n).map(|_| rng.random_range(0.0..span)).collect()
}

/// Rule targets for every other car, given the current world.
fn other_targets(world: &WorldState) -> Vec<f64> {
    let town = &world.town;
    let p = town.params;
    let ego = world.ego_vehicle();
    let n = world.others.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let car = &world.others[i];
        // nearest vehicle ahead among others and the ego
        let mut lead_rear = world.others.get(i + 1).map(Vehicle::rear);
        if ego.s > car.s && lead_rear.is_none_or(|r| ego.rear() < r) {
            lead_rear = Some(ego.rear());
        }
        let gap = lead_rear.map(|rear| rear - car.front());
        let red = nearest_red_ahead(town, &world.lights, car.front());
        let mut target = rule_target_speed(&p, car.behavior.cruise(), car.v, gap, red);
        if let Behavior::Stopper { stop_at, phase, .. } = car.behavior {
            match phase {
                StopPhase::Approaching => {
                    let d = stop_at - car.front();
                    target = target.min((p.k_gap * (d - 0.5)).max(0.0));
                }
                StopPhase::Dwelling { .. } => target = 0.0,
                StopPhase::Done => {}
            }
        }
        out.push(target);
    }
    out
}

/// Advance the world by one tick under the ego command.
pub fn step(world: &WorldState, cmd: ControlCommand) -> (WorldState, StepEvents) {
    debug_assert!(cmd.is_valid(), "invalid command {cmd:?}");
    let mut next = world.clone();
    let p = world.town.params;
    let dt = p.dt;

    // Other cars follow the expert rule, tracked within acceleration limits.
    let targets = other_targets(world);
    let (dlo, dhi) = world.town.dwell_range;
    for (car, target) in next.others.iter_mut().zip(targets) {
        let v = target.clamp((car.v - p.b_max * dt).max(0.0), (car.v + p.a_max * dt).min(p.v_max));
        car.v = v;
        car.s += v * dt;
        let (speed, front) = (car.v, car.front());
        if let Behavior::Stopper { stop_at, ref mut phase, .. } = car.behavior {
            *phase = match *phase {
                StopPhase::Approaching if speed < 0.05 && stop_at - front < 1.5 => {
                    StopPhase::Dwelling { remaining: next.rng.random_range(dlo..=dhi) }
                }
                StopPhase::Approaching if front > stop_at + 1.0 => StopPhase::Done,
                StopPhase::Dwelling { remaining } if remaining - dt <= 0.0 => StopPhase::Done,
                StopPhase::Dwelling { remaining } => StopPhase::Dwelling { remaining: remaining - dt },
                other => other,
            };
        }
    }
    next.others.sort_by(|a, b| a.s.total_cmp(&b.s));

    let throttle = cmd.throttle.clamp(0.0, 1.0);
    let brake = cmd.brake.clamp(0.0, 1.0);
    let accel = p.a_max * throttle - p.b_max * brake;
    next.ego.v = (world.ego.v + accel * dt).clamp(0.0, p.v_max);
    next.ego.s = world.ego.s + next.ego.v * dt;

    next.tick = world.tick + 1;
    next.lights = light_colors(&next.town, next.time());

    let half = 0.5 * p.car_length;
    let (e_lo, e_hi) = (next.ego.s - half, next.ego.s + half);
    let collided = next.others.iter().any(|c| intervals_overlap(e_lo, e_hi, c.rear(), c.front()));
    let arrived = !collided && next.ego.s >= next.goal_s;
    let timed_out = !collided && !arrived && next.time() >= next.timeout - 1e-9;
    let events = StepEvents { collided, arrived, timed_out };
    next.done = events.terminal();
    (next, events)
}

pub fn intervals_overlap(a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64) -> bool {
    a_lo < b_hi && b_lo < a_hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::town::TownConfig;

    fn empty_town() -> TownConfig {
        TownConfig {
            traffic_density: 0.0,
            nuisance_density: 0.0,
            light_positions: vec![],
            light_cycles: vec![],
            ..TownConfig::town_a()
        }
    }

    fn task(town: TownConfig, seed: u64) -> TaskSpec {
        TaskSpec { town, start_s: 20.0, goal_s: 300.0, timeout: 120.0, seed }
    }

    #[test]
    fn zero_density_gives_empty_world() {
        let w = init_world(&task(empty_town(), 7)).unwrap();
        assert!(w.others.is_empty());
        assert!(w.nuisances.is_empty());
        assert_eq!(w.ego, Ego { s: 20.0, v: 0.0 });
    }

    #[test]
    fn init_is_deterministic() {
        let t = task(TownConfig::town_a(), 99);
        let a = init_world(&t).unwrap();
        let b = init_world(&t).unwrap();
        assert_eq!(a.others, b.others);
        assert_eq!(a.nuisances, b.nuisances);
        assert_eq!(a.rng, b.rng);
    }

    #[test]
    fn poisson_traffic_count_fixture() {
        let town = TownConfig { route_length: 500.0, traffic_density: 2.0, ..empty_town() };
        let w = init_world(&TaskSpec { town, start_s: 0.0, goal_s: 500.0, timeout: 60.0, seed: 7 }).unwrap();
        // frozen from a single generator run (Poisson mean 10, minus spacing rejections)
        assert_eq!(w.others.len(), POISSON_FIXTURE_COUNT);
        let spacing = w.town.params.car_length + w.town.params.d_min;
        for pair in w.others.windows(2) {
            assert!(pair[1].s - pair[0].s >= spacing);
        }
        assert!(w.others.iter().all(|c| (c.s - w.ego.s).abs() >= spacing));
    }
    const POISSON_FIXTURE_COUNT: usize = 7;

    #[test]
    fn rejects_start_outside_route() {
        let t = TaskSpec { start_s: -1.0, ..task(empty_town(), 1) };
        assert!(init_world(&t).is_err());
    }

    #[test]
    fn idle_at_rest_stays_put() {
        let w = init_world(&task(empty_town(), 1)).unwrap();
        let (n, ev) = step(&w, ControlCommand::IDLE);
        assert_eq!(n.ego, w.ego);
        assert_eq!(ev, StepEvents::default());
        assert_eq!(n.tick, 1);
    }

    #[test]
    fn full_throttle_accelerates_by_a_max_dt() {
        let mut w = init_world(&task(empty_town(), 1)).unwrap();
        w.ego.v = 5.0;
        let (n, _) = step(&w, ControlCommand { throttle: 1.0, brake: 0.0 });
        assert!((n.ego.v - 5.3).abs() < 1e-12);
        assert!((n.ego.s - (20.0 + 0.53)).abs() < 1e-12);
    }

    #[test]
    fn speed_saturates() {
        let mut w = init_world(&task(empty_town(), 1)).unwrap();
        w.ego.v = 0.2;
        let (n, _) = step(&w, ControlCommand { throttle: 0.0, brake: 1.0 });
        assert_eq!(n.ego.v, 0.0);
        w.ego.v = 11.9;
        let (n, _) = step(&w, ControlCommand { throttle: 1.0, brake: 0.0 });
        assert_eq!(n.ego.v, 12.0);
    }

    #[test]
    fn overlap_oracle_detects_rear_end() {
        // ego front at 10.0 m, lead rear bumper at 10.4 m, ego advances 0.5 m
        let mut w = init_world(&task(empty_town(), 1)).unwrap();
        let half = 0.5 * w.town.params.car_length;
        w.ego = Ego { s: 10.0 - half, v: 5.0 };
        w.others.push(Vehicle {
            s: 10.4 + half,
            v: 0.0,
            length: w.town.params.car_length,
            behavior: Behavior::Stopper { cruise: 5.0, stop_at: 12.4, phase: StopPhase::Dwelling { remaining: 1e9 } },
        });
        let (n, ev) = step(&w, ControlCommand::IDLE);
        assert!((n.ego.s + half - 10.5).abs() < 1e-12);
        let oracle = intervals_overlap(n.ego.s - half, n.ego.s + half, n.others[0].rear(), n.others[0].front());
        assert!(oracle);
        assert!(ev.collided);
        assert!(!ev.arrived);
    }

    #[test]
    fn timeout_after_single_tick() {
        let t = TaskSpec { timeout: 0.1, ..task(empty_town(), 1) };
        let w = init_world(&t).unwrap();
        let (_, ev) = step(&w, ControlCommand::IDLE);
        assert!(ev.timed_out);
    }

    #[test]
    fn lights_follow_cycles() {
        let mut town = empty_town();
        town.light_positions = vec![100.0];
        town.light_cycles = vec![crate::simworld::LightCycle { red: 1.0, green: 1.0, offset: 0.0 }];
        let mut w = init_world(&task(town, 1)).unwrap();
        assert_eq!(w.lights, vec![true]);
        for _ in 0..10 {
            w = step(&w, ControlCommand::IDLE).0;
        }
        assert_eq!(w.lights, vec![false]);
    }
}
