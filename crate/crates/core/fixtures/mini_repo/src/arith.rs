//! Arithmetic helpers with verified bounds.

use vstd::prelude::*;

verus! {

pub open spec fn abs_diff(a: int, b: int) -> int {
    if a >= b { a - b } else { b - a }
}

pub fn clamp_add(a: u32, b: u32) -> (r: u32)
    requires
        a < 1000,
        b < 1000,
    ensures
        r == a + b,
{
    assert(a + b < 2000);
    a + b
}

pub fn sum_to(n: u32) -> (s: u32)
    requires
        n <= 100,
    ensures
        s == n * (n + 1) / 2,
{
    let mut i: u32 = 0;
    let mut s: u32 = 0;
    while i < n
        invariant
            i <= n,
            s == i * (i + 1) / 2,
        decreases n - i,
    {
        i = i + 1;
        s = s + i;
        assert(s == i * (i + 1) / 2);
    }
    s
}

pub fn max3(a: u8, b: u8, c: u8) -> (m: u8)
    ensures
        m >= a,
        m >= b,
        m >= c,
{
    let mut m = a;
    if b > m {
        m = b;
    }
    if c > m {
        m = c;
    }
    assert(m >= a && m >= b && m >= c);
    m
}

pub proof fn lemma_abs_diff_symm(a: int, b: int)
    ensures
        abs_diff(a, b) == abs_diff(b, a),
{
    assert(a - b == -(b - a));
}

} // verus!
