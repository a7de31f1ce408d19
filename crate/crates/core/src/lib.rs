//! Stiffness-from-vibration toolkit for prosthetic pinch grasps.
//!
//! A two-finger grasp closes asymmetrically: one fingertip lands first, the
//! second follows tens of milliseconds later. The ring-down transient picked
//! up by a fingertip piezo at the *first* contact already carries enough
//! information to estimate object stiffness before the grasp is loaded, which
//! leaves time to modulate grip force. This crate holds everything needed to
//! study that loop off-target:
//!
//! - [`synth`]: trace synthesis (contact gaps, transients, force ramps, ADC)
//! - [`dsp`]: causal filters, quantization, analysis windows
//! - [`detect`]: threshold and SVM contact detectors plus scoring
//! - [`ml`]: RBF-SVM (SMO) classification/regression and a small 1-D CNN
//! - [`pipeline`]: streaming replay with a latency ledger and budget verdicts
//! - [`wire`]: the 24-byte sensor frame protocol with a resynchronizing parser
//!
//! The crate is `no_std` + `alloc`; wall-clock time enters only through the
//! [`pipeline::MonotonicClock`] trait so hosts and firmware supply their own.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod detect;
pub mod dsp;
pub mod math;
pub mod ml;
pub mod pipeline;
pub mod synth;
pub mod wire;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
