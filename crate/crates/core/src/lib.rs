//! Firmware vulnerability analysis: filesystem extraction, component
//! inventory, CVE matching, memory-safety classification and impact analytics.

pub mod firmware;
pub mod inventory;
pub mod vulndb;
pub mod classify;
pub mod analytics;
