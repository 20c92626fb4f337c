//! Deliberate backward-pass faults, used to prove the gradient suite catches
//! broken derivatives. Never enabled outside negative-control tests.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Fault {
    None = 0,
    /// Negates the aspect-forget gate's pre-activation gradient.
    FlipAspectForgetBackward = 1,
}

static ACTIVE: AtomicU8 = AtomicU8::new(Fault::None as u8);

pub fn inject(f: Fault) {
    ACTIVE.store(f as u8, Ordering::SeqCst);
}

pub fn clear() {
    inject(Fault::None);
}

pub(crate) fn active(f: Fault) -> bool {
    f != Fault::None && ACTIVE.load(Ordering::Relaxed) == f as u8
}
