verus! {

pub proof fn tiny_lemma(x: u8)
    ensures
        x as int >= 0,
{
    assert(x as int >= 0);
}

} // verus!
