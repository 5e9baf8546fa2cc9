use vstd::prelude::*;

verus! {

pub fn tiny_add(a: u8, b: u8) -> (c: u8)
    requires
        a < 100,
        b < 100,
    ensures
        c == a + b,
{
    assert(a + b < 200);
    a + b
}

} // verus!
