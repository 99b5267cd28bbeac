//! Binary PGM (P5) rendering of patch-token frames.

use std::fs;
use std::path::Path;

use declab_core::frame::FrameGrid;

use crate::error::{CliError, CliResult};

/// Gray level of every patch: token id scaled onto `0..=255`.
pub fn encode(frame: &FrameGrid) -> Vec<u8> {
    let top = (frame.vocab() - 1) as u64;
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(
        frame
            .patches()
            .iter()
            .map(|&p| ((p as u64 * 255 + top / 2) / top) as u8),
    );
    out
}

pub fn write(frame: &FrameGrid, path: &Path) -> CliResult<()> {
    fs::write(path, encode(frame)).map_err(|e| CliError::io(path, e))
}
