//! Dataset directory format shared by training and probing.
//!
//! * `images.bin`: magic `GCLRIMG1`, then u32 count, height, width, channels
//!   (little endian), then every pixel component as a little-endian f32,
//!   image-major and row-major within an image.
//! * `labels.csv`: `id,dist_left,dir_left,dist_front,dir_front,dist_right,dir_right`
//! * `groups.csv`: `anchor_id,role,image_index`, role ∈ {anchor, syn_pos, syn_neg}
//! * `gen_config.txt`: `key=value` echo of the generation settings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::data::{scene_group, AnchorGroup, DataMode, GenSpec};
use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::render::{render, SIZE};
use crate::scene::{traffic_variables, TrafficVariables};

pub const IMAGE_MAGIC: &[u8; 8] = b"GCLRIMG1";
pub const HEADER_BYTES: usize = 24;

pub const IMAGES_FILE: &str = "images.bin";
pub const LABELS_FILE: &str = "labels.csv";
pub const GROUPS_FILE: &str = "groups.csv";
pub const CONFIG_FILE: &str = "gen_config.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupRole {
    Anchor,
    SynPos,
    SynNeg,
}

impl GroupRole {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupRole::Anchor => "anchor",
            GroupRole::SynPos => "syn_pos",
            GroupRole::SynNeg => "syn_neg",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "anchor" => Some(GroupRole::Anchor),
            "syn_pos" => Some(GroupRole::SynPos),
            "syn_neg" => Some(GroupRole::SynNeg),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupEntry {
    pub anchor_id: usize,
    pub role: GroupRole,
    pub image_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub height: usize,
    pub width: usize,
    pub images: Vec<Image>,
    pub labels: Vec<TrafficVariables>,
    pub groups: Vec<GroupEntry>,
    /// Generation settings as ordered `key=value` pairs.
    pub gen_config: Vec<(String, String)>,
}

impl DatasetBundle {
    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.gen_config
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn mode(&self) -> Result<DataMode> {
        self.config_value("mode")
            .ok_or_else(|| Error::Config("dataset has no `mode` in gen_config".into()))?
            .parse()
    }

    /// Generation stream this dataset was cut from.
    pub fn gen_spec(&self) -> Result<GenSpec> {
        let num = |k: &str| -> Result<u64> {
            self.config_value(k)
                .ok_or_else(|| Error::Config(format!("dataset gen_config lacks `{k}`")))?
                .parse()
                .map_err(|_| Error::Config(format!("dataset gen_config `{k}` is not an integer")))
        };
        Ok(GenSpec {
            mode: self.mode()?,
            seed: num("seed")?,
            kp: num("kp")? as usize,
            kn: num("kn")? as usize,
        })
    }

    pub fn anchor_count(&self) -> usize {
        self.groups.iter().filter(|g| g.role == GroupRole::Anchor).count()
    }

    /// Images regrouped per anchor, in anchor-id order.
    pub fn anchor_groups(&self) -> Result<Vec<AnchorGroup>> {
        let n = self.groups.iter().map(|g| g.anchor_id + 1).max().unwrap_or(0);
        let mut out: Vec<Option<AnchorGroup>> = vec![None; n];
        let mut pending: Vec<(usize, GroupRole, usize)> = Vec::new();
        for g in &self.groups {
            if g.role == GroupRole::Anchor {
                out[g.anchor_id] = Some(AnchorGroup {
                    anchor: self.images[g.image_index].clone(),
                    syn_pos: Vec::new(),
                    syn_neg: Vec::new(),
                });
            } else {
                pending.push((g.anchor_id, g.role, g.image_index));
            }
        }
        for (a, role, idx) in pending {
            let group = out[a]
                .as_mut()
                .ok_or_else(|| Error::Config(format!("synthetic image for missing anchor {a}")))?;
            let img = self.images[idx].clone();
            match role {
                GroupRole::SynPos => group.syn_pos.push(img),
                _ => group.syn_neg.push(img),
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(i, g)| g.ok_or_else(|| Error::Config(format!("anchor id {i} missing"))))
            .collect()
    }

    /// Check the invariants the readers enforce.
    pub fn validate(&self) -> Result<()> {
        let count = self.images.len();
        if self.labels.len() != count {
            return Err(Error::Config(format!(
                "{} labels for {} images",
                self.labels.len(),
                count
            )));
        }
        for g in &self.groups {
            if g.image_index >= count {
                return Err(Error::IndexOutOfRange {
                    index: g.image_index,
                    count,
                });
            }
        }
        if self.mode().ok() == Some(DataMode::GameClr) {
            for a in self.groups.iter().filter(|g| g.role == GroupRole::Anchor) {
                let has = |r: GroupRole| {
                    self.groups
                        .iter()
                        .any(|g| g.anchor_id == a.anchor_id && g.role == r)
                };
                if !has(GroupRole::SynPos) || !has(GroupRole::SynNeg) {
                    return Err(Error::Config(format!(
                        "anchor {} lacks synthetic positives or negatives",
                        a.anchor_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Render `anchors` groups of epoch 0 of `spec` into a bundle.
pub fn generate_dataset(spec: &GenSpec, anchors: usize) -> Result<DatasetBundle> {
    let groups: Vec<_> = (0..anchors as u64)
        .into_par_iter()
        .map(|i| scene_group(spec, 0, i))
        .collect::<Result<Vec<_>>>()?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut entries = Vec::new();
    for (a, g) in groups.iter().enumerate() {
        let members = std::iter::once((&g.anchor, GroupRole::Anchor))
            .chain(g.syn_pos.iter().map(|s| (s, GroupRole::SynPos)))
            .chain(g.syn_neg.iter().map(|s| (s, GroupRole::SynNeg)));
        for (scene, role) in members {
            entries.push(GroupEntry {
                anchor_id: a,
                role,
                image_index: images.len(),
            });
            labels.push(traffic_variables(scene));
            images.push(scene.clone());
        }
    }
    let images = images.par_iter().map(render).collect();
    let (kp, kn) = match spec.mode {
        DataMode::GameClr => (spec.kp, spec.kn),
        _ => (0, 0),
    };
    Ok(DatasetBundle {
        height: SIZE,
        width: SIZE,
        images,
        labels,
        groups: entries,
        gen_config: vec![
            ("mode".into(), spec.mode.as_str().into()),
            ("anchors".into(), anchors.to_string()),
            ("seed".into(), spec.seed.to_string()),
            ("kp".into(), kp.to_string()),
            ("kn".into(), kn.to_string()),
            ("max_vehicles".into(), spec.mode.anchor_max_vehicles().to_string()),
            ("height".into(), SIZE.to_string()),
            ("width".into(), SIZE.to_string()),
        ],
    })
}

pub fn encode_images(height: usize, width: usize, images: &[Image]) -> Vec<u8> {
    let per = height * width * CHANNELS;
    let mut out = Vec::with_capacity(HEADER_BYTES + images.len() * per * 4);
    out.extend_from_slice(IMAGE_MAGIC);
    for v in [images.len(), height, width, CHANNELS] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for img in images {
        for v in img.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<Image>)> {
    if bytes.len() < 8 || &bytes[..8] != IMAGE_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    if bytes.len() < HEADER_BYTES {
        return Err(Error::TruncatedBlob {
            path: path.to_path_buf(),
            expected: HEADER_BYTES as u64,
            found: bytes.len() as u64,
        });
    }
    let u = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (count, h, w, c) = (u(0), u(1), u(2), u(3));
    if c != CHANNELS {
        return Err(Error::parse(path, format!("expected {CHANNELS} channels, header says {c}")));
    }
    let per = h * w * c;
    let expected = HEADER_BYTES as u64 + (count as u64) * (per as u64) * 4;
    if (bytes.len() as u64) < expected {
        return Err(Error::TruncatedBlob {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    if bytes.len() as u64 > expected {
        return Err(Error::parse(path, "trailing bytes after image data"));
    }
    let body = &bytes[HEADER_BYTES..];
    let images = (0..count)
        .map(|i| {
            let chunk = &body[i * per * 4..(i + 1) * per * 4];
            let data: Vec<f32> = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            if let Some((j, &v)) = data.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(Error::PixelOutOfRange {
                    offset: i * per + j,
                    value: v,
                });
            }
            Image::from_data(h, w, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((h, w, images))
}

/// Render an f64 with up to 17 significant digits (exact round trip).
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(p, e))
    };
    write(IMAGES_FILE, &encode_images(bundle.height, bundle.width, &bundle.images))?;

    let mut labels = String::from("id,dist_left,dir_left,dist_front,dir_front,dist_right,dir_right\n");
    for (i, l) in bundle.labels.iter().enumerate() {
        let vals: Vec<String> = l.to_array().iter().map(|&v| fmt_f64(v)).collect();
        writeln!(labels, "{i},{}", vals.join(",")).unwrap();
    }
    write(LABELS_FILE, labels.as_bytes())?;

    let mut groups = String::from("anchor_id,role,image_index\n");
    for g in &bundle.groups {
        writeln!(groups, "{},{},{}", g.anchor_id, g.role.as_str(), g.image_index).unwrap();
    }
    write(GROUPS_FILE, groups.as_bytes())?;

    let mut cfg = String::new();
    for (k, v) in &bundle.gen_config {
        writeln!(cfg, "{k}={v}").unwrap();
    }
    write(CONFIG_FILE, cfg.as_bytes())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn csv_rows<'a>(text: &'a str, path: &Path, header: &str) -> Result<Vec<Vec<&'a str>>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        other => {
            return Err(Error::parse(
                path,
                format!("expected header `{header}`, found `{}`", other.unwrap_or("")),
            ))
        }
    }
    let width = header.split(',').count();
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let cols: Vec<&str> = l.split(',').map(str::trim).collect();
            if cols.len() != width {
                return Err(Error::parse(path, format!("row {}: expected {width} columns", i + 1)));
            }
            Ok(cols)
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(s: &str, path: &Path) -> Result<T> {
    s.parse().map_err(|_| Error::parse(path, format!("bad number `{s}`")))
}

/// Read and validate a dataset directory.
pub fn read_dataset(dir: &Path) -> Result<DatasetBundle> {
    let ip = dir.join(IMAGES_FILE);
    let bytes = fs::read(&ip).map_err(|e| Error::io(&ip, e))?;
    let (height, width, images) = decode_images(&bytes, &ip)?;
    drop(bytes);

    let lp = dir.join(LABELS_FILE);
    let text = read_text(&lp)?;
    let labels = csv_rows(&text, &lp, "id,dist_left,dir_left,dist_front,dir_front,dist_right,dir_right")?
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let id: usize = parse_num(row[0], &lp)?;
            if id != i {
                return Err(Error::parse(&lp, format!("row {i} has id {id}")));
            }
            let mut v = [0.0; 6];
            for (k, s) in row[1..].iter().enumerate() {
                v[k] = parse_num(s, &lp)?;
            }
            Ok(TrafficVariables::from_array(v))
        })
        .collect::<Result<Vec<_>>>()?;

    let gp = dir.join(GROUPS_FILE);
    let text = read_text(&gp)?;
    let groups = csv_rows(&text, &gp, "anchor_id,role,image_index")?
        .into_iter()
        .map(|row| {
            Ok(GroupEntry {
                anchor_id: parse_num(row[0], &gp)?,
                role: GroupRole::parse(row[1])
                    .ok_or_else(|| Error::parse(&gp, format!("unknown role `{}`", row[1])))?,
                image_index: parse_num(row[2], &gp)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let cp = dir.join(CONFIG_FILE);
    let gen_config = read_text(&cp)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::parse(&cp, format!("expected key=value, got `{l}`")))
        })
        .collect::<Result<Vec<_>>>()?;

    let bundle = DatasetBundle {
        height,
        width,
        images,
        labels,
        groups,
        gen_config,
    };
    bundle.validate()?;
    Ok(bundle)
}
