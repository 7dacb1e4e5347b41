//! Symbolic driving scenes and the engine-level augmentations applied to them.

use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};
use crate::rng::Xoshiro256;

pub const LANES: usize = 3;
pub const LEFT: usize = 0;
pub const FRONT: usize = 1;
pub const RIGHT: usize = 2;

pub const COLOR_COUNT: u8 = 5;
pub const MIN_DISTANCE: f64 = 5.0;
pub const MAX_DISTANCE: f64 = 45.0;
pub const MAX_DIRECTION: f64 = FRAC_PI_4;
/// Distance reported for an empty lane.
pub const ABSENT_DISTANCE: f64 = 50.0;

/// Probability that a scene-altering augmentation also changes the
/// scene-preserving fields.
pub const ALTER_ALSO_PRESERVING_P: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Weather {
    Clear,
    Cloudy,
    Windy,
    Wet,
    Rainy,
}

impl Weather {
    pub const ALL: [Weather; 5] = [
        Weather::Clear,
        Weather::Cloudy,
        Weather::Windy,
        Weather::Wet,
        Weather::Rainy,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeOfDay {
    Noon,
    Sunset,
    Midnight,
}

impl TimeOfDay {
    pub const ALL: [TimeOfDay; 3] = [TimeOfDay::Noon, TimeOfDay::Sunset, TimeOfDay::Midnight];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficVehicle {
    /// Meters ahead of the ego vehicle, in [5, 45].
    pub distance: f64,
    /// Signed heading in radians relative to the road, in [-π/4, π/4].
    pub direction: f64,
    pub color: u8,
}

impl TrafficVehicle {
    pub fn is_valid(&self) -> bool {
        (MIN_DISTANCE..=MAX_DISTANCE).contains(&self.distance)
            && (-MAX_DIRECTION..=MAX_DIRECTION).contains(&self.direction)
            && self.color < COLOR_COUNT
    }

    fn sample(rng: &mut Xoshiro256) -> Self {
        Self {
            distance: rng.uniform(MIN_DISTANCE, MAX_DISTANCE),
            direction: rng.uniform(-MAX_DIRECTION, MAX_DIRECTION),
            color: rng.index(COLOR_COUNT as usize) as u8,
        }
    }
}

/// Symbolic game state: ego appearance, conditions and per-lane traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub ego_color: u8,
    pub weather: Weather,
    pub time_of_day: TimeOfDay,
    /// Index 0 = left, 1 = front, 2 = right.
    pub lanes: [Option<TrafficVehicle>; LANES],
}

impl SceneState {
    pub fn empty() -> Self {
        Self {
            ego_color: 0,
            weather: Weather::Clear,
            time_of_day: TimeOfDay::Noon,
            lanes: [None; LANES],
        }
    }

    pub fn vehicle_count(&self) -> usize {
        self.lanes.iter().filter(|l| l.is_some()).count()
    }

    pub fn empty_lanes(&self) -> Vec<usize> {
        (0..LANES).filter(|&i| self.lanes[i].is_none()).collect()
    }

    pub fn is_valid(&self) -> bool {
        self.ego_color < COLOR_COUNT && self.lanes.iter().flatten().all(|v| v.is_valid())
    }

    #[cfg(test)]
    fn same_preserving_fields(&self, other: &SceneState) -> bool {
        self.ego_color == other.ego_color
            && self.weather == other.weather
            && self.time_of_day == other.time_of_day
    }
}

/// The six probe targets: distance and direction per lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficVariables {
    pub dist_left: f64,
    pub dir_left: f64,
    pub dist_front: f64,
    pub dir_front: f64,
    pub dist_right: f64,
    pub dir_right: f64,
}

impl TrafficVariables {
    pub const NAMES: [&'static str; 6] = [
        "dist_left",
        "dir_left",
        "dist_front",
        "dir_front",
        "dist_right",
        "dir_right",
    ];

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.dist_left,
            self.dir_left,
            self.dist_front,
            self.dir_front,
            self.dist_right,
            self.dir_right,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            dist_left: v[0],
            dir_left: v[1],
            dist_front: v[2],
            dir_front: v[3],
            dist_right: v[4],
            dir_right: v[5],
        }
    }
}

/// Sample a scene with a uniformly drawn vehicle count in `0..=max_vehicles`.
pub fn sample_scene(seed: u64, max_vehicles: usize) -> SceneState {
    assert!(max_vehicles <= LANES, "max_vehicles must be in 0..=3");
    let mut rng = Xoshiro256::seed_from_u64(seed);
    let ego_color = rng.index(COLOR_COUNT as usize) as u8;
    let weather = Weather::ALL[rng.index(Weather::ALL.len())];
    let time_of_day = TimeOfDay::ALL[rng.index(TimeOfDay::ALL.len())];
    let count = rng.index(max_vehicles + 1);
    let mut lanes_order = [LEFT, FRONT, RIGHT];
    rng.shuffle(&mut lanes_order);
    let mut lanes = [None; LANES];
    for &lane in &lanes_order[..count] {
        lanes[lane] = Some(TrafficVehicle::sample(&mut rng));
    }
    SceneState {
        ego_color,
        weather,
        time_of_day,
        lanes,
    }
}

/// Scene-preserving augmentation: one of weather, time of day and ego color
/// changes. Traffic is copied untouched.
pub fn scene_preserving_augment(s: &SceneState, seed: u64) -> SceneState {
    let mut rng = Xoshiro256::seed_from_u64(seed);
    preserving_with(s, &mut rng)
}

/// Redraw one nuisance field, chosen uniformly, to a different value.
fn preserving_with(s: &SceneState, rng: &mut Xoshiro256) -> SceneState {
    let mut out = s.clone();
    // a draw in 0..n-1 shifted past the current value is uniform over the others
    let other = |rng: &mut Xoshiro256, current: usize, n: usize| {
        let k = rng.index(n - 1);
        if k >= current {
            k + 1
        } else {
            k
        }
    };
    match rng.index(3) {
        0 => out.ego_color = other(rng, s.ego_color as usize, COLOR_COUNT as usize) as u8,
        1 => out.weather = Weather::ALL[other(rng, s.weather.index(), Weather::ALL.len())],
        _ => out.time_of_day = TimeOfDay::ALL[other(rng, s.time_of_day.index(), TimeOfDay::ALL.len())],
    }
    out
}

/// Scene-altering augmentation: spawn 1..=k vehicles into the k empty lanes,
/// and with probability [`ALTER_ALSO_PRESERVING_P`] also apply the
/// scene-preserving change.
pub fn scene_altering_augment(s: &SceneState, seed: u64) -> Result<SceneState> {
    let mut empty = s.empty_lanes();
    if empty.is_empty() {
        return Err(Error::AllLanesOccupied);
    }
    let mut rng = Xoshiro256::seed_from_u64(seed);
    let add = 1 + rng.index(empty.len());
    rng.shuffle(&mut empty);
    let mut out = s.clone();
    for &lane in &empty[..add] {
        out.lanes[lane] = Some(TrafficVehicle::sample(&mut rng));
    }
    if rng.bernoulli(ALTER_ALSO_PRESERVING_P) {
        out = preserving_with(&out, &mut rng);
    }
    Ok(out)
}

pub fn traffic_variables(s: &SceneState) -> TrafficVariables {
    let lane = |i: usize| match s.lanes[i] {
        Some(v) => (v.distance, v.direction),
        None => (ABSENT_DISTANCE, 0.0),
    };
    let (dist_left, dir_left) = lane(LEFT);
    let (dist_front, dir_front) = lane(FRONT);
    let (dist_right, dir_right) = lane(RIGHT);
    TrafficVariables {
        dist_left,
        dir_left,
        dist_front,
        dir_front,
        dist_right,
        dir_right,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic() {
        for seed in 0..50 {
            assert_eq!(sample_scene(seed, 3), sample_scene(seed, 3));
        }
    }

    #[test]
    fn zero_max_vehicles_leaves_lanes_empty() {
        for seed in 0..100 {
            assert_eq!(sample_scene(seed, 0).vehicle_count(), 0);
        }
    }

    #[test]
    fn weather_frequencies_are_uniform() {
        let n = 10_000;
        let mut counts = [0usize; 5];
        let mut vehicle_counts = [0usize; 4];
        for seed in 0..n {
            let s = sample_scene(seed as u64, 3);
            counts[s.weather.index()] += 1;
            vehicle_counts[s.vehicle_count()] += 1;
            assert!(s.is_valid());
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.2).abs() < 0.02, "weather frequency {f}");
        }
        // chi-square with 4 dof, 0.999 quantile = 18.47
        let expected = n as f64 / 5.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 18.47, "chi2 {chi2}");
        for c in vehicle_counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn preserving_changes_style_not_traffic() {
        for seed in 0..1000u64 {
            let s = sample_scene(seed, 3);
            let p = scene_preserving_augment(&s, seed ^ 0xABCD);
            assert!(!p.same_preserving_fields(&s));
            assert_eq!(p.lanes, s.lanes);
            assert_eq!(traffic_variables(&p), traffic_variables(&s));
        }
    }

    #[test]
    fn clear_weather_can_become_rainy() {
        let mut s = SceneState::empty();
        s.weather = Weather::Clear;
        let rainy = (0..200u64)
            .map(|seed| scene_preserving_augment(&s, seed))
            .any(|p| p.weather == Weather::Rainy && p.lanes == s.lanes);
        assert!(rainy);
    }

    #[test]
    fn altering_adds_vehicles() {
        for seed in 0..1000u64 {
            let s = sample_scene(seed, 2);
            let a = scene_altering_augment(&s, seed + 7).unwrap();
            assert!(a.vehicle_count() > s.vehicle_count());
            assert_ne!(traffic_variables(&a), traffic_variables(&s));
            assert!(a.is_valid());
            for lane in 0..LANES {
                if s.lanes[lane].is_some() {
                    assert_eq!(a.lanes[lane], s.lanes[lane]);
                }
            }
        }
    }

    #[test]
    fn altering_full_scene_fails() {
        let mut s = SceneState::empty();
        let v = TrafficVehicle {
            distance: 10.0,
            direction: 0.0,
            color: 1,
        };
        s.lanes = [Some(v); 3];
        assert!(matches!(
            scene_altering_augment(&s, 1),
            Err(Error::AllLanesOccupied)
        ));
    }

    #[test]
    fn traffic_variable_sentinels() {
        let s = SceneState::empty();
        assert_eq!(
            traffic_variables(&s).to_array(),
            [50.0, 0.0, 50.0, 0.0, 50.0, 0.0]
        );
        let mut s = SceneState::empty();
        s.lanes[FRONT] = Some(TrafficVehicle {
            distance: 20.0,
            direction: 0.1,
            color: 2,
        });
        assert_eq!(
            traffic_variables(&s).to_array(),
            [50.0, 0.0, 20.0, 0.1, 50.0, 0.0]
        );
    }
}
