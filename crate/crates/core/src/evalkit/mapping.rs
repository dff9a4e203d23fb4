use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::classes::{Class, NUM_CLASSES};
use crate::error::{Error, Result};

/// Total relabeling from a dataset's label ids onto the shared class set.
/// Label ids of the presets follow the order of `source_names`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMapping {
    pub name: String,
    pub source_names: Vec<String>,
    pub table: BTreeMap<u16, u8>,
}

use Class::*;

const MIDAIR: &[(&str, Class)] = &[
    ("sky", Sky),
    ("animals", Others),
    ("trees", Trees),
    ("dirt ground", Land),
    ("ground vegetation", Land),
    ("rocky ground", Land),
    ("boulders", Rocks),
    ("empty", Others),
    ("water", Water),
    ("man-made construction", Building),
    ("road", Road),
    ("train track", Others),
    ("road sign", Others),
    ("others", Others),
];

const TOPAIR: &[(&str, Class)] = &[
    ("sky", Sky),
    ("water", Water),
    ("trees", Trees),
    ("land", Land),
    ("vehicle", Vehicle),
    ("rocks", Rocks),
    ("road", Road),
    ("building", Building),
    ("others", Others),
];

const SKY_SYN: &[(&str, Class)] = &[
    ("sky", Sky),
    ("water", Water),
    ("vegetation", Trees),
    ("terrain", Land),
    ("other", Land),
    ("cars", Vehicle),
    ("bus", Vehicle),
    ("truck", Vehicle),
    ("motorcycle", Vehicle),
    ("rider", Vehicle),
    ("train", Vehicle),
    ("road", Road),
    ("sidewalk", Road),
    ("roadline", Road),
    ("ground", Road),
    ("building", Building),
    ("bridge", Building),
    ("railtrack", Building),
    ("wall", Building),
    ("static", Others),
    ("dynamic", Others),
    ("fence", Others),
    ("pedestrian", Others),
    ("pole", Others),
    ("traffic sign", Others),
    ("traffic light", Others),
    ("unlabeled", Others),
    ("other (in town10)", Others),
    ("bicycle", Others),
    ("guardrail", Others),
];

const DRONESCAPES: &[(&str, Class)] = &[
    ("land", Land),
    ("forest", Trees),
    ("residential", Building),
    ("road", Road),
    ("little-objects", Vehicle),
    ("water", Water),
    ("sky", Sky),
    ("hill", Land),
];

const WILDUAV: &[(&str, Class)] = &[
    ("sky", Sky),
    ("deciduous tree", Trees),
    ("coniferous tree", Trees),
    ("fallen trees", Trees),
    ("dirt ground", Land),
    ("ground vegetation", Land),
    ("rocks", Rocks),
    ("water plane", Water),
    ("building", Building),
    ("fence", Others),
    ("road", Road),
    ("sidewalk", Road),
    ("static car", Vehicle),
    ("moving car", Vehicle),
    ("people", Others),
    ("empty", Others),
];

const AEROSCAPES: &[(&str, Class)] = &[
    ("background", Land),
    ("person", Others),
    ("bike", Others),
    ("car", Vehicle),
    ("drone", Others),
    ("boat", Others),
    ("animal", Others),
    ("obstacle", Others),
    ("construction", Building),
    ("vegetation", Trees),
    ("road", Road),
    ("sky", Sky),
];

const RURALSCAPES: &[(&str, Class)] = &[
    ("forest", Trees),
    ("residential", Building),
    ("land", Land),
    ("sky", Sky),
    ("hill", Land),
    ("road", Road),
    ("church", Building),
    ("fence", Others),
    ("water", Water),
    ("person", Others),
    ("car", Vehicle),
    ("haystack", Others),
];

const UDD: &[(&str, Class)] = &[
    ("facade", Building),
    ("road", Road),
    ("vegetation", Trees),
    ("vehicle", Vehicle),
    ("roof", Building),
    ("others", Land),
];

const ICG: &[(&str, Class)] = &[
    ("tree", Trees),
    ("rocks", Rocks),
    ("dog", Others),
    ("fence", Others),
    ("grass", Land),
    ("water", Water),
    ("car", Vehicle),
    ("fence-pole", Others),
    ("other vegetation", Trees),
    ("paved area", Road),
    ("bicycle", Others),
    ("window", Building),
    ("dirt", Land),
    ("pool", Water),
    ("roof", Building),
    ("door", Building),
    ("gravel", Road),
    ("person", Others),
    ("wall", Building),
    ("obstacle", Others),
];

impl ClassMapping {
    pub fn from_names(name: &str, rows: &[(&str, Class)]) -> Self {
        ClassMapping {
            name: name.to_string(),
            source_names: rows.iter().map(|(n, _)| n.to_string()).collect(),
            table: rows.iter().enumerate().map(|(k, (_, c))| (k as u16, c.index())).collect(),
        }
    }

    pub fn identity() -> Self {
        let rows: Vec<(&str, Class)> = Class::ALL.iter().map(|c| (c.name(), *c)).collect();
        Self::from_names("identity", &rows)
    }

    pub fn midair() -> Self {
        Self::from_names("midair", MIDAIR)
    }

    pub fn topair() -> Self {
        Self::from_names("topair", TOPAIR)
    }

    pub fn sky_syn() -> Self {
        Self::from_names("skyscenes-syndrone", SKY_SYN)
    }

    pub fn dronescapes() -> Self {
        Self::from_names("dronescapes", DRONESCAPES)
    }

    pub fn wilduav() -> Self {
        Self::from_names("wilduav", WILDUAV)
    }

    pub fn aeroscapes() -> Self {
        Self::from_names("aeroscapes", AEROSCAPES)
    }

    pub fn ruralscapes() -> Self {
        Self::from_names("ruralscapes", RURALSCAPES)
    }

    pub fn udd() -> Self {
        Self::from_names("udd", UDD)
    }

    pub fn icg() -> Self {
        Self::from_names("icg", ICG)
    }

    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "identity" => Self::identity(),
            "midair" => Self::midair(),
            "topair" => Self::topair(),
            "skyscenes" | "syndrone" | "skyscenes-syndrone" => Self::sky_syn(),
            "dronescapes" => Self::dronescapes(),
            "wilduav" => Self::wilduav(),
            "aeroscapes" => Self::aeroscapes(),
            "ruralscapes" => Self::ruralscapes(),
            "udd" => Self::udd(),
            "icg" => Self::icg(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((s, t)) = self.table.iter().find(|(_, &t)| t as usize >= NUM_CLASSES) {
            return Err(Error::Config(format!("{}: label {s} maps to {t}, outside the class set", self.name)));
        }
        Ok(())
    }

    pub fn get(&self, label: u16) -> Option<u8> {
        self.table.get(&label).copied()
    }

    /// Target class of a source label given by name.
    pub fn target_of(&self, source_name: &str) -> Option<Class> {
        let k = self.source_names.iter().position(|n| n.eq_ignore_ascii_case(source_name))?;
        self.get(k as u16).and_then(Class::from_index)
    }
}

/// Element-wise relabel. Every label present must be in the mapping.
pub fn map_classes<T: Copy + Into<u16>>(seg: &Array2<T>, mapping: &ClassMapping) -> Result<Array2<u8>> {
    mapping.validate()?;
    let mut missing: Vec<u16> = seg.iter().map(|&v| v.into()).filter(|v| !mapping.table.contains_key(v)).collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(Error::UnmappedLabels { labels: missing });
    }
    Ok(seg.mapv(|v| mapping.table[&v.into()]))
}
