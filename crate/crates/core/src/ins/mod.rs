//! Strapdown INS simulation: IMU error model, local-level mechanization and
//! velocity aiding.

mod aiding;
mod imu;
mod mechanize;

pub use aiding::{aid_ins, AidingMode, VelocityAider};
pub use imu::{corrupt_imu, ImuErrors, ImuSample, ImuSpec};
pub use mechanize::{
    advance_position, ideal_increment, ins_mechanize, InsState, MechanizationConfig, Mechanizer,
    EARTH_RATE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum InsError {
    #[error("invalid INS configuration: {0}")]
    Invalid(String),
}
