//! The shared 9-class aerial label set.

use serde::{Deserialize, Serialize};

pub const NUM_CLASSES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Class {
    Sky = 0,
    Water = 1,
    Trees = 2,
    Land = 3,
    Vehicle = 4,
    Rocks = 5,
    Road = 6,
    Building = 7,
    Others = 8,
}

impl Class {
    pub const ALL: [Class; NUM_CLASSES] = [
        Class::Sky,
        Class::Water,
        Class::Trees,
        Class::Land,
        Class::Vehicle,
        Class::Rocks,
        Class::Road,
        Class::Building,
        Class::Others,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(index: u8) -> Option<Class> {
        Class::ALL.get(index as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Sky => "sky",
            Class::Water => "water",
            Class::Trees => "trees",
            Class::Land => "land",
            Class::Vehicle => "vehicle",
            Class::Rocks => "rocks",
            Class::Road => "road",
            Class::Building => "building",
            Class::Others => "others",
        }
    }
}

/// Default display palette, one RGB triple per class index.
pub const DEFAULT_PALETTE: [[u8; 3]; NUM_CLASSES] = [
    [135, 190, 235], // sky
    [40, 80, 170],   // water
    [40, 120, 40],   // trees
    [150, 120, 80],  // land
    [210, 40, 40],   // vehicle
    [120, 120, 120], // rocks
    [60, 60, 60],    // road
    [200, 170, 140], // building
    [230, 200, 40],  // others
];
