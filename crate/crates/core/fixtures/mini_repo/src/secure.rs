//! Project-specific bounded integer with verified growth.

use vstd::prelude::*;

verus! {

/// Integers in this project must stay below the secure ceiling.
pub struct SecureInt {
    pub value: u64,
}

pub const SECURE_CEILING: u64 = 0x4000_0000;

impl SecureInt {
    pub open spec fn in_range(&self) -> bool {
        self.value < 0x4000_0000
    }
}

pub open spec fn secure_sum(a: SecureInt, b: SecureInt) -> int {
    a.value + b.value
}

pub proof fn lemma_secure_bound(a: u64, b: u64)
    requires
        a < 0x4000_0000,
        b < 0x4000_0000,
    ensures
        a + b < 0x8000_0000,
{
    assert(a + b < 0x8000_0000);
}

pub fn double_secure(x: &SecureInt) -> (r: u64)
    requires
        x.in_range(),
    ensures
        r == 2 * x.value,
{
    assert(x.value < 0x4000_0000);
    2 * x.value
}

pub fn combine_secure(a: &SecureInt, b: &SecureInt) -> (r: u64)
    requires
        a.in_range(),
        b.in_range(),
    ensures
        r == secure_sum(*a, *b),
{
    proof {
        lemma_secure_bound(a.value, b.value);
    }
    a.value + b.value
}

} // verus!
