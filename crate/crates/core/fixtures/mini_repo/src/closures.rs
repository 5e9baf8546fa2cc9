//! Closure-local proof content is masked like any other proof line.

use vstd::prelude::*;

use crate::secure::SecureInt;

verus! {

pub open spec fn limit_ok(n: u64) -> bool {
    n < 1024
}

pub fn scan_limit(xs: &Vec<u64>) -> (total: u64)
    requires
        xs@.len() < 8,
    ensures
        total <= 8192,
{
    let mut total: u64 = 0;
    let mut idx = 0;
    while idx < xs.len()
        invariant
            total <= 1024 * idx,
        decreases xs@.len() - idx,
    {
        let clipped = |v: u64| -> u64 {
            assert(1024u64 < 2048);
            if v < 1024 { v } else { 1024 }
        };
        total = total + clipped(xs[idx]);
        idx = idx + 1;
    }
    total
}

pub fn secure_from(raw: u64) -> (s: SecureInt)
    requires
        raw < 1024,
    ensures
        s.value == raw,
{
    let s = SecureInt { value: raw };
    assert(s.value < 0x4000_0000);
    s
}

} // verus!
