//! Per-vehicle high-level actions and the base-5 joint action encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HighLevelAction {
    LaneLeft = 0,
    Idle = 1,
    LaneRight = 2,
    Faster = 3,
    Slower = 4,
}

impl HighLevelAction {
    pub const COUNT: usize = 5;
    pub const ALL: [HighLevelAction; 5] = [
        HighLevelAction::LaneLeft,
        HighLevelAction::Idle,
        HighLevelAction::LaneRight,
        HighLevelAction::Faster,
        HighLevelAction::Slower,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn is_lane_change(self) -> bool {
        matches!(self, HighLevelAction::LaneLeft | HighLevelAction::LaneRight)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointAction {
    pub per_vehicle: Vec<HighLevelAction>,
    pub index: usize,
}

impl JointAction {
    pub fn from_tuple(per_vehicle: Vec<HighLevelAction>) -> Self {
        let index = encode_action(&per_vehicle);
        Self { per_vehicle, index }
    }

    pub fn from_index(index: usize, num_vehicles: usize) -> Result<Self> {
        Ok(Self {
            per_vehicle: decode_action(index, num_vehicles)?,
            index,
        })
    }

    pub fn uniform(action: HighLevelAction, num_vehicles: usize) -> Self {
        Self::from_tuple(vec![action; num_vehicles])
    }

    pub fn len(&self) -> usize {
        self.per_vehicle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_vehicle.is_empty()
    }

    pub fn with(&self, slot: usize, action: HighLevelAction) -> Self {
        let mut per_vehicle = self.per_vehicle.clone();
        per_vehicle[slot] = action;
        Self::from_tuple(per_vehicle)
    }
}

/// Size of the joint action space, `5^n`.
pub fn joint_action_count(num_vehicles: usize) -> usize {
    HighLevelAction::COUNT.pow(num_vehicles as u32)
}

/// Most significant digit belongs to the first vehicle.
pub fn encode_action(per_vehicle: &[HighLevelAction]) -> usize {
    per_vehicle
        .iter()
        .fold(0, |acc, a| acc * HighLevelAction::COUNT + a.index())
}

pub fn decode_action(index: usize, num_vehicles: usize) -> Result<Vec<HighLevelAction>> {
    if index >= joint_action_count(num_vehicles) {
        return Err(Error::ActionOutOfRange {
            index,
            num_vehicles,
        });
    }
    let mut digits = vec![HighLevelAction::Idle; num_vehicles];
    let mut rest = index;
    for slot in (0..num_vehicles).rev() {
        digits[slot] = HighLevelAction::ALL[rest % HighLevelAction::COUNT];
        rest /= HighLevelAction::COUNT;
    }
    Ok(digits)
}
