//! Counting allocator used to check memory claims.
//!
//! Install it in a binary with
//! `#[global_allocator] static A: qgw::alloc_probe::CountingAlloc = qgw::alloc_probe::CountingAlloc;`.
//! When it is not installed every counter stays at zero.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering::Relaxed};

pub struct CountingAlloc;

static INSTALLED: AtomicBool = AtomicBool::new(false);
static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static MAX_SINGLE: AtomicUsize = AtomicUsize::new(0);
static WATCH: AtomicUsize = AtomicUsize::new(usize::MAX);
static WATCH_HITS: AtomicUsize = AtomicUsize::new(0);

fn record(size: usize) {
    let now = CURRENT.fetch_add(size, Relaxed) + size;
    PEAK.fetch_max(now, Relaxed);
    MAX_SINGLE.fetch_max(size, Relaxed);
    if size >= WATCH.load(Relaxed) {
        WATCH_HITS.fetch_add(1, Relaxed);
    }
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            INSTALLED.store(true, Relaxed);
            record(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            INSTALLED.store(true, Relaxed);
            record(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        CURRENT.fetch_sub(layout.size(), Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            CURRENT.fetch_sub(layout.size(), Relaxed);
            record(new_size);
        }
        p
    }
}

/// Counter values in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocStats {
    pub current: usize,
    pub peak: usize,
    pub max_single: usize,
    /// Allocations at or above the watch threshold since the last reset.
    pub watch_hits: usize,
}

/// Whether the counting allocator is the global allocator of this process.
pub fn is_installed() -> bool {
    // make sure at least one allocation has gone through the allocator
    drop(std::hint::black_box(Box::new(0u8)));
    INSTALLED.load(Relaxed)
}

/// Restarts peak tracking from the current usage and sets the size at or
/// above which an allocation counts as a watch hit.
pub fn reset(watch_bytes: usize) {
    PEAK.store(CURRENT.load(Relaxed), Relaxed);
    MAX_SINGLE.store(0, Relaxed);
    WATCH.store(watch_bytes, Relaxed);
    WATCH_HITS.store(0, Relaxed);
}

pub fn stats() -> AllocStats {
    AllocStats {
        current: CURRENT.load(Relaxed),
        peak: PEAK.load(Relaxed),
        max_single: MAX_SINGLE.load(Relaxed),
        watch_hits: WATCH_HITS.load(Relaxed),
    }
}
