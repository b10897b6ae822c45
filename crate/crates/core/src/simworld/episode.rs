use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::expert::expert_target_speed;
use super::render::{render_frame, CarBox, Frame, LightMark, Observation};
use super::town::{TaskSpec, TownConfig};
use super::world::{init_world, step, ControlCommand, Nuisance, Side, StepEvents, WorldState};
use super::SimError;
use crate::control::{longitudinal_control, speed_error, ControllerGains};

pub const LOG_MAGIC: &[u8; 8] = b"CIMEPLOG";
pub const LOG_VERSION: u32 = 1;

/// Ground-truth generative factors the expert reacts to (and one it ignores).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Factors {
    pub gap_to_lead: Option<f64>,
    pub red_light_distance: Option<f64>,
    pub rear_gap: Option<f64>,
}

impl Factors {
    pub fn capture(world: &WorldState) -> Self {
        Self {
            gap_to_lead: world.gap_to_lead(),
            red_light_distance: world.red_light_distance(),
            rear_gap: world.rear_gap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub ego_s: f64,
    pub ego_v: f64,
    /// Speed the driver aimed for this tick (expert target or agent prediction).
    pub target_speed: f64,
    pub command: ControlCommand,
    /// Events produced by applying `command` to this state.
    pub events: StepEvents,
    pub factors: Factors,
    pub frame: Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub town_id: String,
    pub seed: u64,
    pub dt: f64,
    pub grid_side: u32,
    pub start_s: f64,
    pub goal_s: f64,
    pub timeout: f64,
    pub driver: String,
}

/// Per-tick trace of one episode. Observations are stored as captured
/// frames and re-rendered on demand; rendering is pure, so this is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub meta: EpisodeMeta,
    pub town: TownConfig,
    pub nuisances: Vec<Nuisance>,
    pub records: Vec<TickRecord>,
}

impl EpisodeLog {
    pub fn new(task: &TaskSpec, world: &WorldState, driver: &str) -> Self {
        Self {
            meta: EpisodeMeta {
                town_id: task.town.town_id.clone(),
                seed: task.seed,
                dt: task.town.params.dt,
                grid_side: task.town.render.grid_side as u32,
                start_s: task.start_s,
                goal_s: task.goal_s,
                timeout: task.timeout,
                driver: driver.to_string(),
            },
            town: task.town.clone(),
            nuisances: world.nuisances.clone(),
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn observation(&self, t: usize) -> Observation {
        render_frame(&self.town, &self.nuisances, &self.records[t].frame)
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.ego_v).collect()
    }

    pub fn final_events(&self) -> StepEvents {
        self.records.last().map(|r| r.events).unwrap_or_default()
    }

    pub fn collided(&self) -> bool {
        self.records.iter().any(|r| r.events.collided)
    }

    pub fn push(&mut self, world: &WorldState, target_speed: f64, command: ControlCommand, events: StepEvents) {
        self.records.push(TickRecord {
            tick: world.tick,
            ego_s: world.ego.s,
            ego_v: world.ego.v,
            target_speed,
            command,
            events,
            factors: Factors::capture(world),
            frame: Frame::capture(world),
        });
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(LOG_MAGIC)?;
        w.write_all(&LOG_VERSION.to_le_bytes())?;
        w.write_all(&self.meta.grid_side.to_le_bytes())?;
        w.write_all(&self.meta.dt.to_le_bytes())?;
        write_str(&mut w, &self.meta.town_id)?;
        w.write_all(&self.meta.seed.to_le_bytes())?;
        for v in [self.meta.start_s, self.meta.goal_s, self.meta.timeout] {
            w.write_all(&v.to_le_bytes())?;
        }
        write_str(&mut w, &self.meta.driver)?;
        let town = serde_json::to_string(&self.town).map_err(io::Error::other)?;
        write_str(&mut w, &town)?;
        w.write_all(&(self.nuisances.len() as u32).to_le_bytes())?;
        for n in &self.nuisances {
            w.write_all(&n.s.to_le_bytes())?;
            w.write_all(&[matches!(n.side, Side::Right) as u8, n.style])?;
        }
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            w.write_all(&r.tick.to_le_bytes())?;
            for v in [r.ego_s, r.ego_v, r.target_speed, r.command.throttle, r.command.brake] {
                w.write_all(&v.to_le_bytes())?;
            }
            let flags = r.events.collided as u8 | (r.events.arrived as u8) << 1 | (r.events.timed_out as u8) << 2;
            w.write_all(&[flags])?;
            for v in [r.factors.gap_to_lead, r.factors.red_light_distance, r.factors.rear_gap] {
                w.write_all(&v.unwrap_or(f64::NAN).to_le_bytes())?;
            }
            w.write_all(&r.frame.ego_s.to_le_bytes())?;
            w.write_all(&(r.frame.cars.len() as u16).to_le_bytes())?;
            for c in &r.frame.cars {
                w.write_all(&c.s.to_le_bytes())?;
                w.write_all(&c.length.to_le_bytes())?;
            }
            w.write_all(&(r.frame.lights.len() as u16).to_le_bytes())?;
            for l in &r.frame.lights {
                w.write_all(&l.s.to_le_bytes())?;
                w.write_all(&[l.red as u8])?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, SimError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != LOG_MAGIC {
            return Err(SimError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != LOG_VERSION {
            return Err(SimError::Format(format!("unsupported version {version}")));
        }
        let grid_side = read_u32(&mut r)?;
        let dt = read_f64(&mut r)?;
        let town_id = read_str(&mut r)?;
        let seed = read_u64(&mut r)?;
        let start_s = read_f64(&mut r)?;
        let goal_s = read_f64(&mut r)?;
        let timeout = read_f64(&mut r)?;
        let driver = read_str(&mut r)?;
        let town: TownConfig = serde_json::from_str(&read_str(&mut r)?).map_err(|e| SimError::Format(e.to_string()))?;
        let n_nuis = read_u32(&mut r)? as usize;
        let mut nuisances = Vec::with_capacity(n_nuis);
        for _ in 0..n_nuis {
            let s = read_f64(&mut r)?;
            let mut b = [0u8; 2];
            r.read_exact(&mut b)?;
            let side = if b[0] == 1 { Side::Right } else { Side::Left };
            nuisances.push(Nuisance { s, side, style: b[1] });
        }
        let n_rec = read_u64(&mut r)? as usize;
        let mut records = Vec::with_capacity(n_rec);
        for _ in 0..n_rec {
            let tick = read_u64(&mut r)?;
            let ego_s = read_f64(&mut r)?;
            let ego_v = read_f64(&mut r)?;
            let target_speed = read_f64(&mut r)?;
            let throttle = read_f64(&mut r)?;
            let brake = read_f64(&mut r)?;
            let mut flags = [0u8; 1];
            r.read_exact(&mut flags)?;
            let f = flags[0];
            let opt = |v: f64| if v.is_nan() { None } else { Some(v) };
            let factors = Factors {
                gap_to_lead: opt(read_f64(&mut r)?),
                red_light_distance: opt(read_f64(&mut r)?),
                rear_gap: opt(read_f64(&mut r)?),
            };
            let frame_ego = read_f64(&mut r)?;
            let n_cars = read_u16(&mut r)? as usize;
            let mut cars = Vec::with_capacity(n_cars);
            for _ in 0..n_cars {
                cars.push(CarBox { s: read_f64(&mut r)?, length: read_f64(&mut r)? });
            }
            let n_lights = read_u16(&mut r)? as usize;
            let mut lights = Vec::with_capacity(n_lights);
            for _ in 0..n_lights {
                let s = read_f64(&mut r)?;
                let mut b = [0u8; 1];
                r.read_exact(&mut b)?;
                lights.push(LightMark { s, red: b[0] == 1 });
            }
            records.push(TickRecord {
                tick,
                ego_s,
                ego_v,
                target_speed,
                command: ControlCommand { throttle, brake },
                events: StepEvents { collided: f & 1 != 0, arrived: f & 2 != 0, timed_out: f & 4 != 0 },
                factors,
                frame: Frame { ego_s: frame_ego, cars, lights },
            });
        }
        Ok(Self {
            meta: EpisodeMeta { town_id, seed, dt, grid_side, start_s, goal_s, timeout, driver },
            town,
            nuisances,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        let f = std::fs::File::create(path)?;
        self.write_binary(io::BufWriter::new(f))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let f = std::fs::File::open(path)?;
        Self::read_binary(io::BufReader::new(f))
    }

    /// One row per tick with the flattened observation appended.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let mut out = csv::Writer::from_writer(w);
        let side = self.meta.grid_side as usize;
        let mut header: Vec<String> = [
            "tick",
            "ego_s",
            "ego_v",
            "target_speed",
            "throttle",
            "brake",
            "collided",
            "arrived",
            "timed_out",
            "gap_to_lead",
            "red_light_distance",
            "rear_gap",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..side * side).map(|i| format!("px{i}")));
        out.write_record(&header).map_err(csv_err)?;
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (t, r) in self.records.iter().enumerate() {
            let mut row = vec![
                r.tick.to_string(),
                r.ego_s.to_string(),
                r.ego_v.to_string(),
                r.target_speed.to_string(),
                r.command.throttle.to_string(),
                r.command.brake.to_string(),
                (r.events.collided as u8).to_string(),
                (r.events.arrived as u8).to_string(),
                (r.events.timed_out as u8).to_string(),
                fmt_opt(r.factors.gap_to_lead),
                fmt_opt(r.factors.red_light_distance),
                fmt_opt(r.factors.rear_gap),
            ];
            row.extend(self.observation(t).pixels.iter().map(|v| v.to_string()));
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::Format(e.to_string())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String, SimError> {
    let n = read_u32(r)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| SimError::Format(e.to_string()))
}

fn read_u16<R: Read>(r: &mut R) -> io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Drive a task to termination with a per-tick policy returning
/// `(aimed speed, command)`.
pub fn run_episode<F>(task: &TaskSpec, driver: &str, mut policy: F) -> Result<EpisodeLog, SimError>
where
    F: FnMut(&WorldState) -> Result<(f64, ControlCommand), SimError>,
{
    let mut world = init_world(task)?;
    let mut log = EpisodeLog::new(task, &world, driver);
    while !world.done {
        let (aim, cmd) = policy(&world)?;
        let (next, events) = step(&world, cmd);
        log.push(&world, aim, cmd, events);
        world = next;
    }
    Ok(log)
}

/// Roll out the rule-based expert through the proportional controller.
pub fn run_expert_episode(task: &TaskSpec) -> Result<EpisodeLog, SimError> {
    let gains = ControllerGains::default();
    let log = run_episode(task, "expert", |w| {
        let target = expert_target_speed(w);
        Ok((target, longitudinal_control(speed_error(target, w.ego.v), &gains)))
    })?;
    if let Some(r) = log.records.iter().find(|r| r.events.collided) {
        return Err(SimError::ExpertCollision { seed: task.seed, tick: r.tick });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::LightCycle;

    fn bare(town: TownConfig) -> TownConfig {
        TownConfig {
            traffic_density: 0.0,
            nuisance_density: 0.0,
            light_positions: vec![],
            light_cycles: vec![],
            ..town
        }
    }

    #[test]
    fn empty_road_reaches_cruise() {
        let task = TaskSpec { town: bare(TownConfig::town_a()), start_s: 0.0, goal_s: 300.0, timeout: 120.0, seed: 1 };
        let log = run_expert_episode(&task).unwrap();
        assert!(log.final_events().arrived);
        let v_star = task.town.cruise_speed;
        let q = log.len() * 3 / 4;
        for r in &log.records[q..] {
            assert!((r.ego_v - v_star).abs() <= 0.05 * v_star, "speed {}", r.ego_v);
        }
    }

    #[test]
    fn red_light_stop_and_recover() {
        let mut town = bare(TownConfig::town_a());
        town.light_positions = vec![60.0];
        town.light_cycles = vec![LightCycle { red: 10.0, green: 1000.0, offset: 0.0 }];
        let task = TaskSpec { town, start_s: 40.0, goal_s: 200.0, timeout: 120.0, seed: 1 };
        let log = run_expert_episode(&task).unwrap();
        assert!(log.final_events().arrived);
        let speeds = log.speeds();
        let (imin, vmin) = speeds
            .iter()
            .enumerate()
            .skip(5)
            .take_while(|(i, _)| (*i as f64) * 0.1 < 10.0)
            .fold((0, f64::MAX), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        assert!(vmin < 0.1, "min speed {vmin}");
        assert!(speeds[imin..].iter().cloned().fold(0.0, f64::max) > 6.0);
        // stopped before the line
        let front = log.records[imin].ego_s + 2.0;
        assert!(front < 60.0);
    }

    #[test]
    fn immediate_timeout() {
        let task = TaskSpec { town: bare(TownConfig::town_a()), start_s: 0.0, goal_s: 300.0, timeout: 0.1, seed: 1 };
        let log = run_expert_episode(&task).unwrap();
        assert_eq!(log.len(), 1);
        assert!(log.final_events().timed_out);
    }

    #[test]
    fn binary_round_trip_and_determinism() {
        let task = TaskSpec { town: TownConfig::town_a(), start_s: 30.0, goal_s: 130.0, timeout: 60.0, seed: 11 };
        let a = run_expert_episode(&task).unwrap();
        let b = run_expert_episode(&task).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.write_binary(&mut buf_a).unwrap();
        b.write_binary(&mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
        let back = EpisodeLog::read_binary(&buf_a[..]).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.observation(5), a.observation(5));
    }

    #[test]
    fn csv_has_one_row_per_tick() {
        let task = TaskSpec { town: TownConfig::town_a(), start_s: 30.0, goal_s: 40.0, timeout: 60.0, seed: 2 };
        let log = run_expert_episode(&task).unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(&buf[..]);
        let rows: Vec<_> = rdr.records().collect::<Result<_, _>>().unwrap();
        assert_eq!(rows.len(), log.len());
        let px: f64 = rows[3][12].parse().unwrap();
        assert_eq!(px, log.observation(3).pixels[0]);
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(EpisodeLog::read_binary(&b"NOTALOG!...."[..]).is_err());
    }
}
