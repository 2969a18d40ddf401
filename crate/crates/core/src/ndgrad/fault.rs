//! Deliberate corruption of backward rules, used to confirm that the
//! gradient checks catch a broken derivative.

use std::sync::atomic::{AtomicU8, Ordering};

use super::OpKind;

static SIGN_FLIP: AtomicU8 = AtomicU8::new(0);

/// Negates the input gradients produced by every `op` node until cleared.
pub fn inject_sign_flip(op: Option<OpKind>) {
    SIGN_FLIP.store(op.map_or(0, |k| k as u8 + 1), Ordering::SeqCst);
}

pub(crate) fn flips(op: OpKind) -> bool {
    SIGN_FLIP.load(Ordering::Relaxed) == op as u8 + 1
}
