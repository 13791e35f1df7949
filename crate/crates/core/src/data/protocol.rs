//! The seven biaxial testing protocols.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub id: u8,
    pub name: String,
    /// Target `P11 : P22`.
    pub ratio: [f64; 2],
    /// Reported `max λ1, max λ2`.
    pub max_stretch: [f64; 2],
    /// Reported `max P11, max P22` in kPa.
    pub max_stress_kpa: [f64; 2],
    /// Number of frames in the original recording.
    pub reported_samples: usize,
}

const TABLE: [(u8, &str, [f64; 2], [f64; 2], [f64; 2], usize); 7] = [
    (1, "biaxial 1:1", [1.0, 1.0], [1.46, 1.68], [184.1, 165.1], 3921),
    (2, "biaxial 1:0.66", [1.0, 0.66], [1.48, 1.63], [187.1, 127.8], 3797),
    (3, "biaxial 1:0.33", [1.0, 0.33], [1.52, 1.52], [186.9, 74.1], 3539),
    (4, "biaxial 0.66:1", [0.66, 1.0], [1.42, 1.72], [145.9, 188.2], 4013),
    (5, "biaxial 0.33:1", [0.33, 1.0], [1.32, 1.79], [77.9, 189.8], 4175),
    (6, "constrained uniaxial x", [0.05, 1.0], [1.56, 1.0], [197.9, 10.6], 3539),
    (7, "constrained uniaxial y", [1.0, 0.1], [1.0, 1.89], [17.2, 176.1], 3539),
];

pub fn protocol_table() -> Vec<ProtocolSpec> {
    TABLE
        .iter()
        .map(|&(id, name, ratio, max_stretch, max_stress_kpa, reported_samples)| ProtocolSpec {
            id,
            name: name.to_string(),
            ratio,
            max_stretch,
            max_stress_kpa,
            reported_samples,
        })
        .collect()
}

pub fn protocol(id: u8) -> Result<ProtocolSpec> {
    protocol_table()
        .into_iter()
        .find(|p| p.id == id)
        .ok_or_else(|| Error::Config(format!("unknown protocol id {id}; valid ids are 1-7")))
}
