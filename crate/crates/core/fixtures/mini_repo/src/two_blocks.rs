// Plain Rust helpers sit above and between the verified regions.

pub fn free_outside(x: u32) -> u32 {
    x.wrapping_add(1)
}

verus! {

pub open spec fn min_spec(a: int, b: int) -> int {
    if a <= b { a } else { b }
}

} // verus!

pub fn between_blocks(x: u32) -> u32 {
    x / 2
}

verus! {

pub fn pick_min(a: u32, b: u32) -> (m: u32)
    ensures
        m == min_spec(a as int, b as int),
{
    let m = if a <= b { a } else { b };
    assert(m == min_spec(a as int, b as int));
    m
}

} // verus!
