use super::town::SimParams;
use super::world::WorldState;

/// Speed the rule-based driver wants given its surroundings.
///
/// The minimum of three terms: the cruise speed, a gap-keeping term
/// `k_gap * (gap - d_min)` and a red-light term that treats the stop line as a
/// stationary obstacle `stop_margin` metres ahead. A car already inside its
/// braking distance when the light turns red commits and ignores that light.
pub fn rule_target_speed(
    p: &SimParams,
    cruise: f64,
    speed: f64,
    gap_to_lead: Option<f64>,
    red_light_distance: Option<f64>,
) -> f64 {
    let mut target = cruise;
    if let Some(gap) = gap_to_lead {
        target = target.min((p.k_gap * (gap - p.d_min)).max(0.0));
    }
    if let Some(d) = red_light_distance {
        let room = d - p.stop_margin;
        let committed = speed > 1.0 && room < speed * speed / (2.0 * p.b_max);
        if !committed {
            target = target.min((p.k_gap * room).max(0.0));
        }
    }
    target
}

/// The expert's target speed for the ego car.
///
/// Depends only on the lead car, the lights and the ego speed; scenery and
/// cars behind the ego never enter.
pub fn expert_target_speed(world: &WorldState) -> f64 {
    rule_target_speed(
        &world.town.params,
        world.town.cruise_speed,
        world.ego.v,
        world.gap_to_lead(),
        world.red_light_distance(),
    )
}
