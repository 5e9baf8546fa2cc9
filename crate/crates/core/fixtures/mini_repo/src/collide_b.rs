//! Second module defining its own `Token`; name lookups must prefer the
//! same-file definition.

use vstd::prelude::*;

verus! {

pub struct Token {
    pub bytes: u64,
}

pub fn token_emit(n: u64) -> (t: Token)
    ensures
        t.bytes == n,
{
    let t: Token = Token { bytes: n };
    assert(t.bytes == n);
    t
}

} // verus!
