//! Stylized 2D rasterizer turning a [`SceneState`] into pixels.
//!
//! The camera sits behind the ego vehicle looking down a straight three-lane
//! road. Depth is mapped to screen rows by `HORIZON + FOCAL / distance`, so
//! vehicle size and row both encode distance, and heading is drawn as a
//! horizontal shear plus offset.

use crate::image::{Image, DEFAULT_SIZE};
use crate::scene::{SceneState, TimeOfDay, TrafficVehicle, Weather, LANES};

pub const SIZE: usize = DEFAULT_SIZE;
const HORIZON: f64 = 24.0;
const FOCAL_ROWS: f64 = 160.0;
const CENTER_X: f64 = 32.0;
const ROAD_HALF_TOP: f64 = 4.0;
const ROAD_HALF_BOTTOM: f64 = 30.0;
/// Horizontal skew constant: offset = sin(direction) · distance · K_SKEW
/// in units of the vehicle's on-screen width.
pub const K_SKEW: f64 = 0.02;
/// Row-wise shear of the vehicle body per unit sin(direction).
const SHEAR: f64 = 0.5;
const HOOD_TOP: usize = 57;
const VEHICLE_WIDTH: f64 = 0.95;
const VEHICLE_ASPECT: f64 = 1.2;
const FLANK_LANE: f64 = 0.25;
const FLANK_HEADING: f64 = 0.9;
const HOOD_LEFT: usize = 18;
const HOOD_RIGHT: usize = 46;

type Rgb = [f64; 3];

/// Palette shared by the ego hood and traffic vehicles.
pub const PALETTE: [Rgb; 5] = [
    [0.80, 0.10, 0.10],
    [0.10, 0.25, 0.80],
    [0.92, 0.92, 0.92],
    [0.08, 0.08, 0.10],
    [0.92, 0.80, 0.10],
];

const GRASS: Rgb = [0.25, 0.52, 0.20];
const ASPHALT: Rgb = [0.38, 0.38, 0.40];
const MARKING: Rgb = [0.92, 0.92, 0.85];
const GLASS: Rgb = [0.55, 0.70, 0.80];
const TYRE: Rgb = [0.05, 0.05, 0.05];
const TAIL_LIGHT: Rgb = [0.95, 0.15, 0.10];

fn sky(time: TimeOfDay) -> (Rgb, Rgb) {
    match time {
        TimeOfDay::Noon => ([0.30, 0.55, 0.95], [0.70, 0.85, 1.00]),
        TimeOfDay::Sunset => ([0.30, 0.20, 0.45], [1.00, 0.55, 0.25]),
        TimeOfDay::Midnight => ([0.01, 0.01, 0.06], [0.08, 0.09, 0.20]),
    }
}

/// Scene illumination: a brightness gain plus an additive colour cast.
#[derive(Debug, Clone, Copy)]
struct Light {
    gain: f64,
    tint: Rgb,
}

fn light(time: TimeOfDay) -> Light {
    match time {
        TimeOfDay::Noon => Light {
            gain: 1.0,
            tint: [0.0, 0.0, 0.0],
        },
        TimeOfDay::Sunset => Light {
            gain: 0.85,
            tint: [0.08, 0.02, -0.03],
        },
        TimeOfDay::Midnight => Light {
            gain: 0.5,
            tint: [0.0, 0.01, 0.06],
        },
    }
}

fn lit(c: Rgb, l: Light) -> Rgb {
    [
        c[0] * l.gain + l.tint[0],
        c[1] * l.gain + l.tint[1],
        c[2] * l.gain + l.tint[2],
    ]
}

fn scale(c: Rgb, k: f64) -> Rgb {
    [c[0] * k, c[1] * k, c[2] * k]
}

fn mix(a: Rgb, b: Rgb, t: f64) -> Rgb {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Stateless per-pixel hash in [0, 1).
fn hash01(x: i64, y: i64, salt: u64) -> f64 {
    let mut z = (x as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
        ^ salt;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn road_half_width(y: f64) -> f64 {
    ROAD_HALF_TOP + (ROAD_HALF_BOTTOM - ROAD_HALF_TOP) * (y - HORIZON) / (SIZE as f64 - 1.0 - HORIZON)
}

fn in_road(y: usize, x: usize) -> bool {
    let yc = y as f64 + 0.5;
    if yc < HORIZON {
        return false;
    }
    (x as f64 + 0.5 - CENTER_X).abs() <= road_half_width(yc)
}

/// Pixels where traffic can be drawn. Scenes that differ only in traffic
/// produce images that differ only inside this mask.
pub fn road_mask() -> Vec<bool> {
    let mut m = Vec::with_capacity(SIZE * SIZE);
    for y in 0..SIZE {
        for x in 0..SIZE {
            m.push(in_road(y, x));
        }
    }
    m
}

/// Screen-space footprint of a traffic vehicle.
#[derive(Debug, Clone, Copy)]
struct Footprint {
    bottom: f64,
    width: f64,
    height: f64,
    left: f64,
    shear: f64,
}

fn footprint(lane: usize, v: &TrafficVehicle) -> Footprint {
    let bottom = HORIZON + FOCAL_ROWS / v.distance;
    let lane_width = 2.0 * road_half_width(bottom) / LANES as f64;
    let width = (VEHICLE_WIDTH * lane_width).max(3.0);
    let height = (VEHICLE_ASPECT * width).max(3.0);
    let s = v.direction.sin();
    let center = CENTER_X + (lane as f64 - 1.0) * lane_width + s * v.distance * K_SKEW * width;
    Footprint {
        bottom,
        width,
        height,
        left: center - width / 2.0,
        shear: s * SHEAR,
    }
}

fn draw_vehicle(img: &mut [Rgb], lane: usize, v: &TrafficVehicle, l: Light) {
    let f = footprint(lane, v);
    let body = lit(PALETTE[v.color as usize], l);
    // signed width of the visible flank; positive shows it right of the rear face
    let flank = f.width * (FLANK_LANE * (1.0 - lane as f64) - FLANK_HEADING * v.direction.sin());
    let y0 = (f.bottom - f.height).floor().max(0.0) as usize;
    let y1 = (f.bottom.ceil() as usize).min(SIZE);
    for y in y0..y1 {
        let h = f.bottom - (y as f64 + 0.5);
        if h < 0.0 || h >= f.height {
            continue;
        }
        let left = f.left + f.shear * h;
        let right = left + f.width;
        let (lo, hi) = if flank < 0.0 { (left + flank, right) } else { (left, right + flank) };
        for x in 0..SIZE {
            let xc = x as f64 + 0.5;
            if xc < lo || xc >= hi || !in_road(y, x) {
                continue;
            }
            let t = h / f.height;
            let c = if xc < left || xc >= right {
                if t > 0.85 {
                    continue;
                }
                lit(if t < 0.3 { TYRE } else { GLASS }, l)
            } else {
                let u = (xc - left) / f.width;
                if t < 0.2 && !(0.22..=0.78).contains(&u) {
                    TAIL_LIGHT
                } else if t > 0.62 {
                    scale(body, 0.45)
                } else {
                    body
                }
            };
            img[y * SIZE + x] = c;
        }
    }
}

/// Render a scene. Pure: equal scenes give bit-identical images.
pub fn render(s: &SceneState) -> Image {
    let l = light(s.time_of_day);
    let (sky_top, sky_bottom) = sky(s.time_of_day);
    let mut buf = vec![[0.0f64; 3]; SIZE * SIZE];

    for y in 0..SIZE {
        let yc = y as f64 + 0.5;
        for x in 0..SIZE {
            let xc = x as f64 + 0.5;
            let px = &mut buf[y * SIZE + x];
            if yc < HORIZON {
                *px = mix(sky_top, sky_bottom, yc / HORIZON);
            } else if in_road(y, x) {
                let hw = road_half_width(yc);
                let dx = xc - CENTER_X;
                let line = (0.06 * hw).max(0.5);
                let depth = FOCAL_ROWS / (yc - HORIZON).max(0.5);
                let dashed_on = ((depth / 4.0).floor() as i64) % 2 == 0;
                let sep = hw / 3.0;
                let on_sep = (dx.abs() - sep).abs() < line && dashed_on;
                let on_edge = hw - dx.abs() < line;
                *px = lit(if on_sep || on_edge { MARKING } else { ASPHALT }, l);
            } else {
                *px = lit(GRASS, l);
            }
        }
    }

    // far vehicles first
    let mut order: Vec<(usize, TrafficVehicle)> = (0..LANES)
        .filter_map(|i| s.lanes[i].map(|v| (i, v)))
        .collect();
    order.sort_by(|a, b| b.1.distance.total_cmp(&a.1.distance).then(a.0.cmp(&b.0)));
    for (lane, v) in &order {
        draw_vehicle(&mut buf, *lane, v, l);
    }

    let hood = lit(PALETTE[s.ego_color as usize], l);
    for y in HOOD_TOP..SIZE {
        for x in HOOD_LEFT..HOOD_RIGHT {
            buf[y * SIZE + x] = if y == HOOD_TOP { scale(hood, 0.7) } else { hood };
        }
    }

    apply_weather(&mut buf, s.weather, s.time_of_day);

    let mut img = Image::new(SIZE, SIZE);
    for (dst, src) in img.data_mut().chunks_exact_mut(3).zip(&buf) {
        for c in 0..3 {
            dst[c] = src[c].clamp(0.0, 1.0) as f32;
        }
    }
    img
}

fn apply_weather(buf: &mut [Rgb], weather: Weather, time: TimeOfDay) {
    let haze = lit([0.62, 0.62, 0.66], light(time));
    let (sky_gray, shift) = match weather {
        Weather::Clear => (0.0, 0.0),
        Weather::Cloudy => (0.5, -0.10),
        Weather::Windy => (0.25, -0.04),
        Weather::Wet => (0.15, -0.03),
        Weather::Rainy => (0.4, -0.08),
    };
    for y in 0..SIZE {
        for x in 0..SIZE {
            let px = &mut buf[y * SIZE + x];
            let yc = y as f64 + 0.5;
            if yc < HORIZON && sky_gray > 0.0 {
                *px = mix(*px, haze, sky_gray);
            }
            match weather {
                Weather::Wet if yc >= HORIZON => {
                    if in_road(y, x) {
                        *px = scale(*px, 0.8);
                    }
                    if hash01(x as i64, y as i64 / 2, 0x5EED_0001) < 0.08 {
                        *px = [px[0] + 0.15, px[1] + 0.15, px[2] + 0.17];
                    }
                }
                Weather::Rainy => {
                    if hash01(x as i64, (y as i64 + x as i64 / 2) / 3, 0x5EED_0002) < 0.07 {
                        *px = mix(*px, [0.75, 0.75, 0.80], 0.5);
                    }
                }
                _ => {}
            }
            for c in px.iter_mut() {
                *c += shift;
            }
        }
    }
}

/// Axis-aligned pixel bounding box `(y0, x0, y1, x1)`, inclusive, of the
/// pixels where `a` and `b` differ.
pub fn diff_bbox(a: &Image, b: &Image) -> Option<(usize, usize, usize, usize)> {
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for y in 0..a.height() {
        for x in 0..a.width() {
            if a.pixel(y, x) != b.pixel(y, x) {
                bbox = Some(match bbox {
                    None => (y, x, y, x),
                    Some((y0, x0, y1, x1)) => (y0.min(y), x0.min(x), y1.max(y), x1.max(x)),
                });
            }
        }
    }
    bbox
}
