//! First of two modules that both define a `Token` header type.

use vstd::prelude::*;

verus! {

pub struct Token {
    pub bits: u32,
}

pub open spec fn token_tag(t: Token) -> int {
    t.bits as int
}

pub fn token_round(x: u32) -> (t: Token)
    ensures
        t.bits >= x,
{
    let t: Token = Token { bits: x };
    assert(t.bits >= x);
    t
}

} // verus!
