//! Comparison schemes: windowed OTFS and delay-block UFMC.

mod dr;
mod rw;

pub use dr::{DrUfmc, DrUfmcSpec};
pub use rw::{rw_otfs_rx, rw_otfs_tx, RwOtfs, WindowKind, WindowSpec};
