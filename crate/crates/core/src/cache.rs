//! Small cache of per-column data keyed by the column's base point.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use crate::basedyn::{BasePoint, BaseSystem, centered};
use crate::error::Result;

/// Anchors closer than this in every coordinate name the same column; a
/// point stepped back to its floor-0 anchor differs from the stored anchor
/// only by rounding.
const ANCHOR_TOL: f64 = 1e-12;

pub(crate) struct ColumnCache<T> {
    slots: Mutex<VecDeque<(u8, BasePoint, Arc<T>)>>,
    cap: usize,
}

fn same_anchor(base: &BaseSystem, a: &BasePoint, b: &BasePoint) -> bool {
    match (a, b) {
        (BasePoint::Odometer(j), BasePoint::Odometer(k)) => j == k,
        _ => {
            let (ca, cb) = (base.coords(a), base.coords(b));
            centered(ca[0] - cb[0]).abs() < ANCHOR_TOL && centered(ca[1] - cb[1]).abs() < ANCHOR_TOL
        }
    }
}

impl<T> ColumnCache<T> {
    pub(crate) fn new(cap: usize) -> Self {
        ColumnCache {
            slots: Mutex::new(VecDeque::with_capacity(cap)),
            cap: cap.max(1),
        }
    }

    /// Cached column for `(kind, anchor)`, built by `make` on a miss.
    pub(crate) fn get_or_try(
        &self,
        base: &BaseSystem,
        kind: u8,
        anchor: &BasePoint,
        make: impl FnOnce() -> Result<T>,
    ) -> Result<Arc<T>> {
        {
            let slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
            if let Some((_, _, v)) = slots
                .iter()
                .find(|(k, a, _)| *k == kind && same_anchor(base, a, anchor))
            {
                return Ok(v.clone());
            }
        }
        let value = Arc::new(make()?);
        let mut slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        if slots.len() >= self.cap {
            slots.pop_back();
        }
        slots.push_front((kind, *anchor, value.clone()));
        Ok(value)
    }
}

impl<T> Clone for ColumnCache<T> {
    /// Clones start empty; cached columns are an evaluation detail.
    fn clone(&self) -> Self {
        ColumnCache::new(self.cap)
    }
}
